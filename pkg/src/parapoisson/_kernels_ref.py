"""Pure numpy reference for the compiled kernels."""

import numpy as np


def block_tridiag_solve(lower, diag, upper, rhs):
    """Solve a batch of block-tridiagonal systems sharing off-diagonal blocks.

    Row ``k`` reads ``lower[k] x[k-1] + diag[b, k] x[k] + upper[k] x[k+1] = rhs[b, k]``.

    Parameters
    ----------
    lower, upper : (K, m, m) complex
        Sub- and super-diagonal blocks; ``lower[0]`` and ``upper[K-1]`` are ignored.
    diag : (B, K, m, m) complex
    rhs : (B, K, m) complex

    Returns
    -------
    (B, K, m) complex
    """
    lower = np.asarray(lower, dtype=complex)
    upper = np.asarray(upper, dtype=complex)
    diag = np.asarray(diag, dtype=complex)
    rhs = np.asarray(rhs, dtype=complex)
    nb, nk, m = rhs.shape
    cp = np.empty((nb, nk, m, m), dtype=complex)
    dp = np.empty((nb, nk, m), dtype=complex)
    for k in range(nk):
        d = diag[:, k]
        r = rhs[:, k]
        if k > 0:
            d = d - lower[k] @ cp[:, k - 1]
            r = r - np.einsum("ij,bj->bi", lower[k], dp[:, k - 1])
        stacked = np.concatenate([upper[k][None].repeat(nb, 0), r[..., None]], axis=-1)
        sol = np.linalg.solve(d, stacked)
        cp[:, k] = sol[..., :m]
        dp[:, k] = sol[..., m]
    x = np.empty_like(dp)
    x[:, -1] = dp[:, -1]
    for k in range(nk - 2, -1, -1):
        x[:, k] = dp[:, k] - np.einsum("bij,bj->bi", cp[:, k], x[:, k + 1])
    return x
