"""Meromorphic quadratic differentials on the sphere, their horizontal
foliations, leaf-space trees, and harmonic maps on cylinders."""

from folia.qdiff import (
    INF,
    LaurentModel,
    PrincipalPart,
    QDiffError,
    RationalSphere,
    Residue,
    check_compatibility,
    from_manifest,
    principal_part,
    residue,
)

__version__ = "0.1.0"

__all__ = [
    "INF",
    "LaurentModel",
    "PrincipalPart",
    "QDiffError",
    "RationalSphere",
    "Residue",
    "check_compatibility",
    "from_manifest",
    "principal_part",
    "residue",
]
