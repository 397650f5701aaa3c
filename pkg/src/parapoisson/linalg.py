"""Batched small-matrix helpers (trailing two axes are the matrix axes)."""

import numpy as np


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def herm(a):
    return 0.5 * (a + dagger(a))


def comm(a, b):
    return a @ b - b @ a


def eye_like(shape_prefix, n):
    return np.broadcast_to(np.eye(n, dtype=complex), tuple(shape_prefix) + (n, n)).copy()


def heigh(h):
    w, v = np.linalg.eigh(herm(h))
    return w, v


def hfunc(h, fn, eig=None):
    """Apply a scalar function to the spectrum of Hermitian matrices."""
    w, v = heigh(h) if eig is None else eig
    return (v * fn(w)[..., None, :]) @ dagger(v)


def hpow(h, p, eig=None):
    return hfunc(h, lambda w: w ** p, eig)


def hexp(z):
    return hfunc(z, np.exp)


def hlog(h):
    return hfunc(h, np.log)


def log_ratio(a, b, eig_a=None):
    """Principal ``Log(a^{-1} b)`` for Hermitian positive-definite ``a`` and ``b``.

    Uses ``a^{-1/2} Log(a^{-1/2} b a^{-1/2}) a^{1/2}`` so that only Hermitian
    eigendecompositions are needed; its trace equals ``log det b - log det a``.
    """
    w, v = heigh(a) if eig_a is None else eig_a
    s = np.sqrt(w)
    ah = (v * s[..., None, :]) @ dagger(v)
    aih = (v * (1 / s)[..., None, :]) @ dagger(v)
    inner = herm(aih @ b @ aih)
    return aih @ hlog(inner) @ ah


def ad_matrix(a):
    """Matrix of ``Y -> aY - Ya`` on row-major vec(Y)."""
    n = a.shape[-1]
    eye = np.eye(n)
    left = np.einsum("...ik,jl->...ijkl", a, eye)
    right = np.einsum("ik,...lj->...ijkl", eye, a)
    out = left - right
    return out.reshape(a.shape[:-2] + (n * n, n * n))
