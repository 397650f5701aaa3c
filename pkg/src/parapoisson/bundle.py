"""Flat bundles with regular singularities at 0 and infinity of the sphere.

A bundle is given by its residue blocks at each puncture (Jordan data in the
temporal normal form) together with one parabolic weight per block.  The zero
presentation fixes the global frame: on the cylinder the connection reads
``d + B dy`` with ``B`` the direct sum of ``kappa_l I + N`` over the zero
blocks, in canonical order.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NonConvergence, ValidationError

PUNCTURES = ("zero", "infinity")
_IM_TOL = 1e-9
_SLOPE_TOL = 1e-12


def _frac(value: float) -> float:
    out = value % 1.0
    if out >= 1.0 or abs(out - 1.0) < 1e-15:
        out = 0.0
    return out + 0.0


@dataclass(frozen=True)
class JordanBlock:
    kappa: complex
    dim: int

    def __post_init__(self):
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError(f"block dim must be a positive integer, got {self.dim}")
        object.__setattr__(self, "kappa", complex(self.kappa))
        object.__setattr__(self, "dim", int(self.dim))

    @property
    def sort_key(self):
        return (self.kappa.real, self.kappa.imag, self.dim)

    def matrix(self) -> np.ndarray:
        return self.kappa * np.eye(self.dim) + np.eye(self.dim, k=1)


def canonical_order(blocks: Sequence[JordanBlock]) -> list[int]:
    """Indices sorting blocks by (Re kappa, Im kappa, dim) descending, stable."""
    return sorted(range(len(blocks)), key=lambda i: tuple(-v for v in blocks[i].sort_key))


@dataclass(frozen=True)
class PuncturePresentation:
    blocks: tuple[JordanBlock, ...]
    puncture_id: str

    def __post_init__(self):
        if self.puncture_id not in PUNCTURES:
            raise ValidationError(f"unknown puncture {self.puncture_id!r}")
        blocks = tuple(self.blocks)
        object.__setattr__(self, "blocks", blocks)
        if not blocks:
            raise ValidationError(f"puncture {self.puncture_id}: no blocks")
        for b in blocks:
            if not 0.0 <= b.kappa.imag < 1.0:
                raise ValidationError(
                    f"puncture {self.puncture_id}: Im(kappa)={b.kappa.imag} outside [0,1); "
                    "apply temporal_normalize first")
        if canonical_order(blocks) != list(range(len(blocks))):
            raise ValidationError(f"puncture {self.puncture_id}: blocks not in canonical order")

    @property
    def rank(self) -> int:
        return sum(b.dim for b in self.blocks)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(b.dim for b in self.blocks)


@dataclass(frozen=True)
class ParabolicStructure:
    weights: dict

    def __post_init__(self):
        w = {p: tuple(float(x) for x in self.weights.get(p, ())) for p in PUNCTURES}
        for p in PUNCTURES:
            if not all(math.isfinite(x) for x in w[p]):
                raise ValidationError(f"non-finite weight at {p}")
        object.__setattr__(self, "weights", w)

    def __getitem__(self, puncture: str) -> tuple[float, ...]:
        return self.weights[puncture]


@dataclass(frozen=True)
class FlatSubbundleSpec:
    """Chain-prefix lengths, one per block, at each puncture."""

    prefixes: dict

    def __post_init__(self):
        pre = {p: tuple(int(s) for s in self.prefixes[p]) for p in PUNCTURES}
        if sum(pre["zero"]) != sum(pre["infinity"]):
            raise ValidationError("subbundle ranks differ between the punctures")
        object.__setattr__(self, "prefixes", pre)

    @property
    def global_rank(self) -> int:
        return sum(self.prefixes["zero"])

    def to_dict(self):
        return {p: list(self.prefixes[p]) for p in PUNCTURES}


@dataclass(frozen=True)
class FlatBundleSpec:
    rank: int
    presentation_zero: PuncturePresentation
    presentation_infinity: PuncturePresentation
    parabolic: ParabolicStructure
    match: tuple[int, ...] = field(init=False, repr=False)

    def __post_init__(self):
        problems = []
        if self.presentation_zero.puncture_id != "zero":
            problems.append("presentation_zero must carry puncture_id 'zero'")
        if self.presentation_infinity.puncture_id != "infinity":
            problems.append("presentation_infinity must carry puncture_id 'infinity'")
        for pres in (self.presentation_zero, self.presentation_infinity):
            if pres.rank != self.rank:
                problems.append(f"block dims at {pres.puncture_id} sum to {pres.rank}, rank is {self.rank}")
            nw = len(self.parabolic[pres.puncture_id])
            if nw != len(pres.blocks):
                problems.append(
                    f"weights at {pres.puncture_id}: {nw} given for {len(pres.blocks)} blocks")
        if problems:
            raise ValidationError("; ".join(problems), problems)
        object.__setattr__(self, "match", _match_blocks(self.presentation_zero, self.presentation_infinity))

    # -- convenience views in zero-block order -------------------------------------------
    @property
    def blocks(self) -> tuple[JordanBlock, ...]:
        return self.presentation_zero.blocks

    @property
    def dims(self) -> tuple[int, ...]:
        return self.presentation_zero.dims

    @property
    def weights_zero(self) -> tuple[float, ...]:
        return self.parabolic["zero"]

    @property
    def weights_infinity_matched(self) -> tuple[float, ...]:
        """Infinity weights re-indexed by the matched zero block."""
        w = self.parabolic["infinity"]
        return tuple(w[j] for j in self.match)

    def residue_matrix(self) -> np.ndarray:
        out = np.zeros((self.rank, self.rank), dtype=complex)
        k = 0
        for b in self.blocks:
            out[k:k + b.dim, k:k + b.dim] = b.matrix()
            k += b.dim
        return out

    def block_slices(self) -> list[slice]:
        out, k = [], 0
        for d in self.dims:
            out.append(slice(k, k + d))
            k += d
        return out

    def full_subbundle(self) -> FlatSubbundleSpec:
        return FlatSubbundleSpec({"zero": self.presentation_zero.dims,
                                  "infinity": self.presentation_infinity.dims})

    def subbundle_from_zero(self, prefixes: Sequence[int]) -> FlatSubbundleSpec:
        inf = [0] * len(self.presentation_infinity.blocks)
        for l, j in enumerate(self.match):
            inf[j] = prefixes[l]
        return FlatSubbundleSpec({"zero": tuple(prefixes), "infinity": tuple(inf)})

    def projection_diagonal(self, sub: FlatSubbundleSpec) -> np.ndarray:
        """0/1 diagonal of the orthogonal projection onto ``sub`` in the unitary frame."""
        diag = np.zeros(self.rank)
        for sl, s in zip(self.block_slices(), sub.prefixes["zero"]):
            diag[sl.start:sl.start + s] = 1.0
        return diag

    # -- serialization ----------------------------------------------------------------------
    def to_dict(self) -> dict:
        def pres(p):
            return {"blocks": [{"kappa_re": b.kappa.real, "kappa_im": b.kappa.imag, "dim": b.dim}
                               for b in p.blocks]}
        return {"rank": self.rank,
                "punctures": {"zero": pres(self.presentation_zero),
                              "infinity": pres(self.presentation_infinity)},
                "weights": {p: list(self.parabolic[p]) for p in PUNCTURES}}

    @classmethod
    def from_dict(cls, data: dict) -> "FlatBundleSpec":
        return bundle_from_dict(data)


def _match_blocks(zero: PuncturePresentation, inf: PuncturePresentation) -> tuple[int, ...]:
    used: set[int] = set()
    match = []
    for b in zero.blocks:
        target_im = _frac(-b.kappa.imag)
        cands = [j for j, c in enumerate(inf.blocks)
                 if j not in used and c.dim == b.dim
                 and min(abs(c.kappa.imag - target_im), 1 - abs(c.kappa.imag - target_im)) < _IM_TOL]
        if not cands:
            raise ValidationError(
                f"no block at infinity matches zero block (kappa={b.kappa}, dim={b.dim}): "
                "dims must agree and Im(kappa_inf) = -Im(kappa_0) mod 1")
        j = min(cands, key=lambda j: abs(inf.blocks[j].kappa.real + b.kappa.real))
        used.add(j)
        match.append(j)
    return tuple(match)


def bundle_from_dict(data: dict) -> FlatBundleSpec:
    """Build a bundle from the JSON layout, sorting blocks canonically.

    Weights follow their blocks through the sort, and Im(kappa) is normalized
    into [0, 1).
    """
    problems = []
    try:
        rank = data["rank"]
        punct = data["punctures"]
        weights = data["weights"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bundle: missing key {exc}") from None
    if not isinstance(rank, int) or rank < 1:
        problems.append(f"rank must be a positive integer, got {rank!r}")
    pres, wts = {}, {}
    for p in PUNCTURES:
        try:
            raw = punct[p]["blocks"]
            blocks = [JordanBlock(complex(b["kappa_re"], b["kappa_im"]), b["dim"]) for b in raw]
        except (KeyError, TypeError, ValidationError) as exc:
            problems.append(f"punctures.{p}: malformed blocks ({exc})")
            continue
        w = list(weights.get(p, [])) if isinstance(weights, dict) else []
        if len(w) != len(blocks):
            problems.append(f"weights.{p}: {len(w)} weights for {len(blocks)} blocks")
            continue
        blocks = [JordanBlock(complex(b.kappa.real, _frac(b.kappa.imag)), b.dim) for b in blocks]
        order = canonical_order(blocks)
        pres[p] = PuncturePresentation(tuple(blocks[i] for i in order), p)
        wts[p] = [float(w[i]) for i in order]
    if problems:
        raise ValidationError("; ".join(problems), problems)
    return FlatBundleSpec(rank, pres["zero"], pres["infinity"], ParabolicStructure(wts))


def load_bundle(path) -> FlatBundleSpec:
    with open(path) as fh:
        return bundle_from_dict(json.load(fh))


def simple_bundle(blocks: Iterable[tuple[complex, int]], w0: Sequence[float],
                  winf: Sequence[float] | None = None) -> FlatBundleSpec:
    """Bundle whose infinity data is the inverse monodromy of the zero data.

    ``w0`` and ``winf`` are listed in the same order as ``blocks``.
    """
    blocks = [(complex(k), int(d)) for k, d in blocks]
    winf = list(w0) if winf is None else list(winf)
    return bundle_from_dict({
        "rank": sum(d for _, d in blocks),
        "punctures": {
            "zero": {"blocks": [{"kappa_re": k.real, "kappa_im": k.imag, "dim": d} for k, d in blocks]},
            "infinity": {"blocks": [{"kappa_re": -k.real, "kappa_im": -k.imag, "dim": d}
                                    for k, d in blocks]}},
        "weights": {"zero": list(w0), "infinity": winf}})


# ---------------------------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------------------------

def jordan_blocks(matrix, tol: float = 1e-8) -> list[JordanBlock]:
    """Jordan data of a square matrix, merging eigenvalues closer than ``tol``.

    Block sizes come from ranks of powers of ``A - kappa I`` restricted by
    singular-value thresholds.  Raises :class:`NonConvergence` when two
    eigenvalue clusters sit within ``2 tol`` of each other.
    """
    a = np.asarray(matrix, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError("matrix must be square")
    if not np.all(np.isfinite(a)):
        raise ValidationError("matrix has non-finite entries")
    if tol <= 0:
        raise ValidationError("tol must be positive")
    n = a.shape[0]
    ev = np.linalg.eigvals(a)
    # single-linkage clustering
    clusters: list[list[complex]] = []
    for z in sorted(ev, key=lambda z: (z.real, z.imag)):
        hits = [c for c in clusters if min(abs(z - w) for w in c) <= tol]
        if not hits:
            clusters.append([z])
        else:
            merged = [z] + [w for c in hits for w in c]
            clusters = [c for c in clusters if not any(c is h for h in hits)] + [merged]
    centres = [complex(np.mean(c)) for c in clusters]
    for i, j in itertools.combinations(range(len(clusters)), 2):
        gap = min(abs(z - w) for z in clusters[i] for w in clusters[j])
        if gap < 2 * tol:
            raise NonConvergence(f"eigenvalue clusters {centres[i]:.3g} and {centres[j]:.3g} "
                                 f"are within 2*tol; adjust tol or supply blocks directly")
    scale = max(1.0, float(np.linalg.norm(a, 2)))
    out = []
    for kappa, members in zip(centres, clusters):
        m = len(members)
        shifted = a - kappa * np.eye(n)
        ranks = [n]
        power = np.eye(n, dtype=complex)
        for k in range(1, m + 1):
            power = power @ shifted
            sv = np.linalg.svd(power, compute_uv=False)
            ranks.append(int(np.sum(sv > 10 * tol * scale ** k)))
        # number of blocks of size >= k is ranks[k-1] - ranks[k]
        at_least = [ranks[k - 1] - ranks[k] for k in range(1, m + 1)] + [0]
        for k in range(m, 0, -1):
            count = at_least[k - 1] - at_least[k]
            out.extend(JordanBlock(kappa, k) for _ in range(count))
        if sum(b.dim for b in out if b.kappa == kappa) != m:
            raise NonConvergence(f"rank sequence at kappa={kappa:.3g} inconsistent with multiplicity {m}")
    return [out[i] for i in canonical_order(out)]


def temporal_normalize(blocks: Sequence[JordanBlock]) -> list[JordanBlock]:
    shifted = [JordanBlock(complex(b.kappa.real, _frac(b.kappa.imag)), b.dim) for b in blocks]
    return [shifted[i] for i in canonical_order(shifted)]


def nilpotent_weights(d: int) -> list[int]:
    if int(d) != d or d < 1:
        raise ValidationError("d must be a positive integer")
    return [2 * i - (d + 1) for i in range(1, d + 1)]


def parabolic_degree(bundle: FlatBundleSpec, sub: FlatSubbundleSpec | None = None) -> float:
    if sub is None:
        sizes = {"zero": bundle.presentation_zero.dims, "infinity": bundle.presentation_infinity.dims}
    else:
        sizes = sub.prefixes
        for p in PUNCTURES:
            pres = bundle.presentation_zero if p == "zero" else bundle.presentation_infinity
            if len(sizes[p]) != len(pres.blocks) or any(
                    not 0 <= s <= d for s, d in zip(sizes[p], pres.dims)):
                raise ValidationError(f"subbundle prefixes at {p} do not fit the blocks")
    return float(sum(w * s for p in PUNCTURES for w, s in zip(bundle.parabolic[p], sizes[p])))


def slope(bundle: FlatBundleSpec, sub: FlatSubbundleSpec | None = None) -> float:
    rk = bundle.rank if sub is None else sub.global_rank
    if rk == 0:
        raise ValidationError("slope of the zero subbundle is undefined")
    return parabolic_degree(bundle, sub) / rk


class SubbundleFamily(list):
    """List of subbundles; ``degenerate`` is set when two blocks share kappa."""

    degenerate: bool = False


def _has_equal_kappa(bundle: FlatBundleSpec) -> bool:
    ks = [b.kappa for b in bundle.blocks]
    return any(abs(a - b) < _IM_TOL for a, b in itertools.combinations(ks, 2))


def enumerate_flat_subbundles(bundle: FlatBundleSpec) -> SubbundleFamily:
    fam = SubbundleFamily()
    dims = bundle.dims
    for pre in itertools.product(*(range(d + 1) for d in dims)):
        if sum(pre) in (0, bundle.rank):
            continue
        fam.append(bundle.subbundle_from_zero(pre))
    fam.degenerate = _has_equal_kappa(bundle)
    return fam


@dataclass(frozen=True)
class StabilityVerdict:
    cls: str
    mu_E: float
    witness: FlatSubbundleSpec | None = None
    witness_slope: float | None = None
    standard_family_only: bool = False

    def to_dict(self) -> dict:
        out = {"class": self.cls, "mu_E": self.mu_E, "standard_family_only": self.standard_family_only}
        if self.witness is not None:
            out["witness"] = self.witness.to_dict()
            out["witness_slope"] = self.witness_slope
        return out


def stability_classify(bundle: FlatBundleSpec) -> StabilityVerdict:
    mu = slope(bundle)
    fam = enumerate_flat_subbundles(bundle)
    flagged = fam.degenerate
    if not fam:
        return StabilityVerdict("stable", mu, standard_family_only=flagged)
    slopes = [slope(bundle, s) for s in fam]
    top = max(range(len(fam)), key=lambda i: slopes[i])
    if slopes[top] > mu + _SLOPE_TOL:
        return StabilityVerdict("unstable", mu, fam[top], slopes[top], flagged)
    equal = [i for i, s in enumerate(slopes) if abs(s - mu) <= _SLOPE_TOL]
    if not equal:
        return StabilityVerdict("stable", mu, standard_family_only=flagged)
    # A Jordan block of size >= 2 has a prefix of the same slope that is not a
    # summand, so only sums of rank-one blocks of slope mu are polystable.
    polystable = all(d == 1 for d in bundle.dims) and all(
        abs(slope(bundle, bundle.subbundle_from_zero([int(l == k) for l in range(len(bundle.dims))])) - mu)
        <= _SLOPE_TOL for k in range(len(bundle.dims)))
    if polystable:
        return StabilityVerdict("polystable", mu, standard_family_only=flagged)
    return StabilityVerdict("strictly-semistable", mu, fam[equal[0]], slopes[equal[0]], flagged)
