"""Pure numpy versions of the compiled kernels in ``_core.pyx``."""
import numpy as np

from .geometry import veronese3


def det_batch(lines, planes, anchor_rows):
    """Determinants ``det(nu(L_1 pi), ..., nu(L_6 pi), nu(a_1), ..., nu(a_4))``.

    lines: (6, 4, 4) complex, planes: (n, 4) complex,
    anchor_rows: (4, 10) complex Veronese images of the anchor points.
    """
    planes = np.asarray(planes, dtype=complex)
    meets = np.einsum("lij,nj->nli", lines, planes)
    mats = np.empty((len(planes), 10, 10), dtype=complex)
    mats[:, :6] = veronese3(meets)
    mats[:, 6:] = anchor_rows
    return np.linalg.det(mats)
