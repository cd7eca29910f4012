"""Wire-protocol conformance suite shared by every embedding backend.

The golden files in ``goldens/`` describe requests and structural
expectations on the responses (status, field shapes, determinism), not
literal values, so one suite covers backends with different models and
embedding sizes.
"""

from .suite import assert_conformance, load_goldens, run_conformance

__all__ = ["assert_conformance", "load_goldens", "run_conformance"]
