"""Finite dimensional models of determinant lines.

The compiled core exposes report builders over a JSON wire format; the
helpers here accept plain python structures and return parsed reports.
"""

import json as _json

try:
    from . import _bvdet as _core
except ImportError:  # development layout: extension built outside the package
    import _bvdet as _core

InvalidInput = _core.InvalidInput
SchemaError = _core.SchemaError

__version__ = _core.__version__
__all__ = [
    "InvalidInput",
    "SchemaError",
    "bv_cohomology",
    "det_bundle",
    "hpl_check",
    "pfaffian",
    "spectral_flow",
    "verify_all",
]


def _as_text(data):
    return data if isinstance(data, str) else _json.dumps(data)


def pfaffian(matrix, mode="exact", tol=1e-9):
    """Pfaffian of a skew matrix.

    Exact mode takes integer or "p/q" string entries and returns a string;
    numeric mode returns a complex number.
    """
    value = _json.loads(_core.pfaffian(_as_text(matrix), mode, tol))["pf"]
    if isinstance(value, list):
        return complex(value[0], value[1])
    return value


def bv_cohomology(matrix, truncation=None, mode="exact", tol=1e-9):
    """Observable complex report: dimensions, cohomology, intertwiner checks."""
    t = -1 if truncation is None else int(truncation)
    return _json.loads(_core.bv_cohomology(_as_text(matrix), t, mode, tol))


def hpl_check(data, mode="exact", tol=1e-9):
    """Transfer a perturbation across a retraction and verify the axioms."""
    return _json.loads(_core.hpl_check(_as_text(data), mode, tol))


def det_bundle(family, tol=1e-9, with_plot=False):
    """Determinant line bundle report for an operator family configuration."""
    return _json.loads(_core.det_bundle(_as_text(family), tol, with_plot))


def spectral_flow(family):
    """Net signed count of eigenvalue crossings through zero around the family."""
    return _core.spectral_flow(_as_text(family))


def verify_all(seed=20240915):
    """Run the full acceptance battery (slow); returns the parsed report."""
    return _json.loads(_core.verify_all(seed))
