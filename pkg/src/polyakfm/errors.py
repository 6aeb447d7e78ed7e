"""Exception types shared across the package."""


class PolyakFMError(Exception):
    """Base class for all package errors."""


class DimensionMismatchError(PolyakFMError):
    """A point or coefficient vector has the wrong dimension."""


class SampleSpaceError(PolyakFMError):
    """A sample is outside the family's sample space, or a draw request
    is incompatible with it (e.g. without-replacement from an infinite
    family, or a subset larger than the family)."""


class InfeasibleConstraintError(PolyakFMError):
    """A sampled constraint has positive value and zero subgradient.

    The constraint's minimum over all points is positive, so no point
    satisfies it and the target set is empty. Surfaced to the caller
    instead of silently skipping the step, which would loop forever.
    """

    def __init__(self, value, omega=None, iteration=None):
        self.value = value
        self.omega = omega
        self.iteration = iteration
        where = f" at iteration {iteration}" if iteration is not None else ""
        super().__init__(
            f"constraint value {value} is positive with a zero subgradient{where}: "
            "the constraint is infeasible on its own, so the feasible set is empty"
        )


class SpecValidationError(PolyakFMError):
    """An experiment spec failed schema validation.

    ``errors`` is a list of ``{"path": str, "message": str}`` dicts, one
    per violation, with JSON-style dotted paths.
    """

    def __init__(self, errors):
        self.errors = list(errors)
        lines = "; ".join(f"{e['path']}: {e['message']}" for e in self.errors)
        super().__init__(f"invalid experiment spec: {lines}")
