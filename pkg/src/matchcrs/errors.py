"""Exception types shared across the package.

InputError marks malformed or infeasible caller data (CLI exit code 1),
CapabilityError marks requests beyond the supported desk scale or outside a
scheme's domain (CLI exit code 2).
"""


class InputError(ValueError):
    pass


class CapabilityError(RuntimeError):
    pass
