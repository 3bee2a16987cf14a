"""Exception types shared across the package."""


class NumericsError(ArithmeticError):
    """A numerical invariant was violated (NaN/Inf values, symmetry residues,
    or a failed gradient check)."""


class FormatError(ValueError):
    """A file did not conform to its on-disk schema (PGM, tensor container,
    manifest, or config)."""
