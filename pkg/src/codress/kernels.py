"""Backend selection for the hot numeric kernels.

``CODRESS_BACKEND=numpy`` selects the vectorized pure-numpy implementations;
anything else (the default) selects the numba-jitted loop kernels, falling
back to uncompiled Python if numba is unavailable.  Both backends share
signatures and semantics; see ``benchmarks/bench_kernels.py`` for a timing
comparison.
"""

import os

_choice = os.environ.get("CODRESS_BACKEND", "numba").lower()

if _choice == "numpy":
    from .backends import np_backend as _impl

    BACKEND = "numpy"
else:
    from .backends import nb_backend as _impl

    BACKEND = "numba" if _impl.NUMBA_ENABLED else "python"

fk_chain = _impl.fk_chain
pd_step = _impl.pd_step
point_body = _impl.point_body
points_body_distance = _impl.points_body_distance
seg_seg_closest = _impl.seg_seg_closest
garment_contacts = _impl.garment_contacts
rigid_contacts = _impl.rigid_contacts
garment_internal_forces = _impl.garment_internal_forces
garment_step = _impl.garment_step
gae_scan = _impl.gae_scan
