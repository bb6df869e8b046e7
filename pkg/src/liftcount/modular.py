"""Compiled back end for the incremental algorithm.

The table recursion is run over the integers modulo a few word-sized primes
with sparse truncated polynomials as coefficients, and the exact result is
recovered by Chinese remaindering. The number of primes comes from a rigorous
bound: the l1 norm of a product is at most the product of the l1 norms, so the
same recursion run on the norms of the parameters (in log space) bounds every
coefficient of the answer.

States are count vectors over *dimensions*. In the plain algorithm a dimension
is a cell. When the pair weight factors as ``r_jl = prod_c g_c(j, class_c(l))``
the dimensions are the classes of every factor ``c`` and the state only keeps
how many processed elements fall in each class, which is all the recursion
ever looks at.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from gmpy2 import is_prime, mpq, mpz
from numba import njit

from .algebra import Poly, PolyRing, normalize_scalar

# ---------------------------------------------------------------------------
# Compiled kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _mul(ak, av, an, bk, bv, bn, packed, trunc_add, high, prime,
         dense, mark, stamp, ok, ov):
    """Truncated product of two sparse polynomials; returns the term count.

    ``av`` holds residues and ``bv`` signed residues of small magnitude.
    """
    bmax = 0
    for y in range(bn):
        if abs(bv[y]) > bmax:
            bmax = abs(bv[y])
    # an output term gathers at most min(an, bn) products; when their sum
    # cannot overflow, reduce only once per output term
    lazy = float(min(an, bn)) * float(bmax) * float(prime) < 9.0e18
    on = 0
    for x in range(an):
        ka = ak[x]
        va = av[x]
        pa = packed[ka] + trunc_add
        for y in range(bn):
            kb = bk[y]
            if (pa + packed[kb]) & high:
                continue
            idx = ka + kb
            if lazy:
                v = va * bv[y]
            else:
                v = (va * bv[y]) % prime
            if mark[idx] != stamp:
                mark[idx] = stamp
                dense[idx] = v
                ok[on] = idx
                on += 1
            elif lazy:
                dense[idx] += v
            else:
                dense[idx] = (dense[idx] + v) % prime
    m = 0
    for x in range(on):
        idx = ok[x]
        v = dense[idx] % prime
        if v:
            ok[m] = idx
            ov[m] = v
            m += 1
    return m


@njit(cache=True)
def _level(n_new, pstart, pj, pold, kidx, offs, keys, vals, kold,
           fstart, fend, fkeys, fvals, usepow, isone, onescale,
           wstart, wend, wkeys, wvals,
           packed, trunc_add, high, prime, box, cap, gid, gdense):
    """One table level. Transition ``q`` reads the stored polynomial
    ``pold[q]`` and the old counts ``kold[kidx[q]]``. With ``gdense`` of more
    than one row the new states are not stored but summed into their groups."""
    final = gdense.shape[0] > 0
    dims = kold.shape[1]
    bk = np.empty(box, np.int64)
    bv = np.empty(box, np.int64)
    tk = np.empty(box, np.int64)
    tv = np.empty(box, np.int64)
    dense = np.zeros(box, np.int64)
    mark = np.zeros(box, np.int64)
    adense = np.zeros(box, np.int64)
    amark = np.zeros(box, np.int64)
    akeys = np.empty(box, np.int64)
    stamp = 0
    astamp = 0
    out_offs = np.empty(n_new + 1, np.int64)
    out_offs[0] = 0
    cap = 1 if final else max(cap, 1024)
    out_keys = np.empty(cap, np.int32)
    out_vals = np.empty(cap, np.int32)
    used = 0
    for t in range(n_new):
        astamp += 1
        an = 0
        for q in range(pstart[t], pstart[t + 1]):
            j = pj[q]
            o = pold[q]
            ko = kidx[q]
            s0 = offs[o]
            cn = offs[o + 1] - s0
            if cn == 0:
                continue
            for x in range(cn):
                bk[x] = keys[s0 + x]
                bv[x] = vals[s0 + x]
            for a in range(dims):
                e = kold[ko, a]
                if e == 0:
                    continue
                if isone[j, a]:
                    c = onescale[j, a, e]
                    if c != 1:
                        for x in range(cn):
                            bv[x] = (bv[x] * c) % prime
                    continue
                if usepow[j, a, e]:
                    reps = 1
                    s = fstart[j, a, e]
                    f = fend[j, a, e]
                else:
                    reps = e
                    s = fstart[j, a, 1]
                    f = fend[j, a, 1]
                for _ in range(reps):
                    stamp += 1
                    cn = _mul(bk, bv, cn, fkeys[s:f], fvals[s:f], f - s, packed,
                              trunc_add, high, prime, dense, mark, stamp, tk, tv)
                    bk, tk = tk, bk
                    bv, tv = tv, bv
                    if cn == 0:
                        break
                if cn == 0:
                    break
            if cn == 0:
                continue
            s = wstart[j]
            f = wend[j]
            if f - s == 1 and wkeys[s] == 0:
                c = wvals[s]
                if c != 1:
                    for x in range(cn):
                        bv[x] = (bv[x] * c) % prime
            else:
                stamp += 1
                cn = _mul(bk, bv, cn, wkeys[s:f], wvals[s:f], f - s, packed,
                          trunc_add, high, prime, dense, mark, stamp, tk, tv)
                bk, tk = tk, bk
                bv, tv = tv, bv
            for x in range(cn):
                idx = bk[x]
                if amark[idx] != astamp:
                    amark[idx] = astamp
                    adense[idx] = bv[x]
                    akeys[an] = idx
                    an += 1
                else:
                    adense[idx] += bv[x]
        # sorted keys make the next level's scatter sweep memory in order
        akeys[:an].sort()
        if final:
            g = gid[t]
            for x in range(an):
                idx = akeys[x]
                gdense[g, idx] = (gdense[g, idx] + adense[idx]) % prime
            out_offs[t + 1] = 0
            continue
        if used + an > cap:
            while used + an > cap:
                cap *= 2
            nk = np.empty(cap, np.int32)
            nv = np.empty(cap, np.int32)
            nk[:used] = out_keys[:used]
            nv[:used] = out_vals[:used]
            out_keys = nk
            out_vals = nv
        for x in range(an):
            idx = akeys[x]
            v = adense[idx] % prime
            if v:
                out_keys[used] = idx
                out_vals[used] = v
                used += 1
        out_offs[t + 1] = used
    return out_offs, out_keys[:used].copy(), out_vals[:used].copy()


@njit(cache=True)
def _target_level(n_new, pstart, pj, pold, kidx, offs, keys, vals, kold,
                  fstart, fend, fkeys, fvals, usepow, isone, onescale,
                  wstart, wend, wkeys, wvals,
                  packed, trunc_add, high, prime, box, gid, gdense,
                  ccomp, cidx, cstride, csize, want):
    """Last table level restricted to wanted degrees of some variables.

    For each transition the factor product ``P`` is formed on its own, its
    terms are bucketed by their degrees in the restricted variables, and each
    term of the old polynomial only meets the bucket that completes it to a
    wanted degree. ``ccomp[idx]`` lists those degrees of a dense index and
    ``cidx[idx]`` is their mixed-radix code.
    """
    dims = kold.shape[1]
    nc = ccomp.shape[1]
    nw = want.shape[0]
    pk = np.empty(box, np.int64)
    pv = np.empty(box, np.int64)
    tk = np.empty(box, np.int64)
    tv = np.empty(box, np.int64)
    sk = np.empty(box, np.int64)
    sv = np.empty(box, np.int64)
    dense = np.zeros(box, np.int64)
    mark = np.zeros(box, np.int64)
    bstart = np.zeros(csize + 1, np.int64)
    bcount = np.zeros(csize, np.int64)
    code = np.empty(box, np.int64)
    stamp = 0
    for t in range(n_new):
        g = gid[t]
        for q in range(pstart[t], pstart[t + 1]):
            j = pj[q]
            o = pold[q]
            ko = kidx[q]
            s0 = offs[o]
            cn = offs[o + 1] - s0
            if cn == 0:
                continue
            s = wstart[j]
            f = wend[j]
            pn = f - s
            for x in range(pn):
                pk[x] = wkeys[s + x]
                pv[x] = wvals[s + x] % prime
            for a in range(dims):
                e = kold[ko, a]
                if e == 0 or pn == 0:
                    continue
                if isone[j, a]:
                    c = onescale[j, a, e]
                    if c != 1:
                        for x in range(pn):
                            pv[x] = (pv[x] * c) % prime
                    continue
                if usepow[j, a, e]:
                    reps = 1
                    s = fstart[j, a, e]
                    f = fend[j, a, e]
                else:
                    reps = e
                    s = fstart[j, a, 1]
                    f = fend[j, a, 1]
                for _ in range(reps):
                    stamp += 1
                    pn = _mul(pk, pv, pn, fkeys[s:f], fvals[s:f], f - s, packed,
                              trunc_add, high, prime, dense, mark, stamp, tk, tv)
                    pk, tk = tk, pk
                    pv, tv = tv, pv
                    if pn == 0:
                        break
            if pn == 0:
                continue
            # bucket P by code
            for x in range(pn):
                code[x] = cidx[pk[x]]
            order = np.argsort(code[:pn])
            for y in range(pn):
                x = order[y]
                sk[y] = pk[x]
                sv[y] = pv[x]
                c = code[x]
                if bcount[c] == 0:
                    bstart[c] = y
                bcount[c] += 1
            for x in range(cn):
                ka = keys[s0 + x]
                va = vals[s0 + x]
                pa = packed[ka] + trunc_add
                for w in range(nw):
                    cb = 0
                    ok = True
                    for c in range(nc):
                        d = want[w, c] - ccomp[ka, c]
                        if d < 0:
                            ok = False
                            break
                        cb += d * cstride[c]
                    if not ok:
                        continue
                    cnt = bcount[cb]
                    if cnt == 0:
                        continue
                    b0 = bstart[cb]
                    for y in range(b0, b0 + cnt):
                        kb = sk[y]
                        if (pa + packed[kb]) & high:
                            continue
                        idx = ka + kb
                        gdense[g, idx] = (gdense[g, idx] + (va * sv[y]) % prime) % prime
            for x in range(pn):
                bcount[code[x]] = 0
    return 0


@njit(cache=True)
def _bound_level(n_new, pstart, pj, pold, lold, kold, lognorm, logw):
    out = np.empty(n_new, np.float64)
    dims = kold.shape[1]
    for t in range(n_new):
        best = -np.inf
        count = pstart[t + 1] - pstart[t]
        vals = np.empty(count, np.float64)
        for q in range(pstart[t], pstart[t + 1]):
            j = pj[q]
            o = pold[q]
            v = lold[o] + logw[j]
            for a in range(dims):
                e = kold[o, a]
                if e:
                    v += e * lognorm[j, a]
            vals[q - pstart[t]] = v
            if v > best:
                best = v
        if best == -np.inf:
            out[t] = best
            continue
        total = 0.0
        for v in vals:
            total += 2.0 ** (v - best)
        out[t] = best + np.log2(total)
    return out


@njit(cache=True)
def _group(offs, keys, vals, gid, n_groups, prime, box):
    dense = np.zeros((n_groups, box), np.int64)
    for t in range(offs.shape[0] - 1):
        g = gid[t]
        for x in range(offs[t], offs[t + 1]):
            dense[g, keys[x]] = (dense[g, keys[x]] + vals[x]) % prime
    return dense


# ---------------------------------------------------------------------------
# Problem set-up
# ---------------------------------------------------------------------------

_PRIME_TOP = (1 << 31) - 1
# past this many wanted degree combinations the plain last level is cheaper
_MAX_TARGETS = 256


def primes(count: int) -> List[int]:
    """The ``count`` largest primes below ``2**31``."""
    out = []
    q = _PRIME_TOP
    while len(out) < count:
        if is_prime(q):
            out.append(q)
        q -= 2
    return out


class _Box:
    """Dense index space of the truncated monomials of a ring."""

    def __init__(self, ring: Optional[PolyRing], unused: Sequence[int] = ()):
        limits = list(ring.limits) if ring is not None else []
        # a variable no parameter mentions stays at degree zero
        for i in unused:
            limits[i] = 0
        self.ring = ring
        self.limits = limits
        self.strides = []
        size = 1
        for l in limits:
            self.strides.append(size)
            size *= l + 1
        self.size = size
        widths = [max(2, (2 * l + 1).bit_length() + 1) for l in limits]
        if sum(widths) > 62:
            raise OverflowError("too many polynomial variables for the compiled back end")
        offsets = []
        pos = 0
        for w in widths:
            offsets.append(pos)
            pos += w
        trunc_add = 0
        high = 0
        for l, w, off in zip(limits, widths, offsets):
            half = 1 << (w - 1)
            trunc_add |= (half - 1 - l) << off
            high |= half << off
        self.trunc_add = trunc_add
        self.high = high
        packed = np.zeros(size, np.int64)
        idx = np.arange(size, dtype=np.int64)
        for l, stride, off in zip(limits, self.strides, offsets):
            packed |= ((idx // stride) % (l + 1)) << off
        self.packed = packed

    def index(self, exps: Sequence[int]) -> int:
        return sum(e * s for e, s in zip(exps, self.strides))

    def exponents(self, idx: int) -> Tuple[int, ...]:
        return tuple((idx // s) % (l + 1) for s, l in zip(self.strides, self.limits))

    def terms(self, value) -> Dict[int, object]:
        """``{dense index: exact coefficient}``; drops truncated terms."""
        if isinstance(value, Poly):
            out = {}
            for exps, c in value.items():
                if all(e <= l for e, l in zip(exps, self.limits)):
                    out[self.index(exps)] = c
            return out
        return {0: value} if value else {}


def _denominator(values) -> int:
    d = 1
    for v in values:
        q = mpq(v)
        d = d * int(q.denominator) // math.gcd(d, int(q.denominator))
    return d


def _log2_l1(terms: Dict[int, object]) -> float:
    total = sum(abs(int(c)) for c in terms.values())
    return math.log2(total) if total else -math.inf


@dataclass
class Factorization:
    """``r_jl = prod_c factors[c][j][class_of[c][l]]`` for every pair of cells."""

    class_of: List[List[int]]            # per factor: class index of each cell
    factors: List[List[List[object]]]    # per factor: [cell j][class] -> value


def _unused_variables(ring: Optional[PolyRing], values) -> List[int]:
    if ring is None:
        return []
    used = set()
    for v in values:
        if isinstance(v, Poly):
            for exps, _ in v.items():
                used.update(i for i, e in enumerate(exps) if e)
    return [i for i in range(len(ring.names)) if i not in used]


def plain_factorization(r) -> Factorization:
    p = len(r)
    return Factorization([list(range(p))], [[list(row) for row in r]])


def _states(proj: np.ndarray, n: int):
    """Level-by-level reachable states and their predecessor lists."""
    p, dims = proj.shape
    base = n + 1
    weights = np.array([base ** i for i in range(dims)], dtype=np.int64) if dims * math.log2(base) < 62 else None
    if weights is None:
        raise OverflowError("state space too wide for the compiled back end")
    codes = proj @ weights
    _, first, level1_of = np.unique(codes, return_index=True, return_inverse=True)
    levels = [(proj[first], None)]
    for _ in range(2, n + 1):
        old = levels[-1][0]
        cand = old[:, None, :] + proj[None, :, :]
        cand_codes = cand.reshape(-1, dims) @ weights
        uniq, idx, inv = np.unique(cand_codes, return_index=True, return_inverse=True)
        new_states = cand.reshape(-1, dims)[idx]
        n_old = old.shape[0]
        old_idx = np.repeat(np.arange(n_old, dtype=np.int64), p)
        js = np.tile(np.arange(p, dtype=np.int64), n_old)
        order = np.argsort(inv, kind="stable")
        pstart = np.zeros(len(uniq) + 1, np.int64)
        np.add.at(pstart, inv + 1, 1)
        pstart = np.cumsum(pstart)
        levels.append((new_states, (pstart, js[order], old_idx[order])))
    return levels, level1_of


def _codes(states: np.ndarray, n: int) -> np.ndarray:
    weights = np.array([(n + 1) ** i for i in range(states.shape[1])], dtype=np.int64)
    return states @ weights


def _fold(levels, sigma: Optional[Sequence[int]], n: int):
    """Keep one state of each pair ``{s, sigma(s)}`` per level.

    Returns per level the kept state indices, the transitions into kept
    states as ``(pstart, pj, pold, kidx)`` with ``pold`` numbering kept old
    states and ``kidx`` the full old states, and each state's mirror image.
    """
    out = []
    prev_pos = None
    for i, (states, trans) in enumerate(levels):
        codes = _codes(states, n)
        if sigma is None:
            mirror = np.arange(states.shape[0], dtype=np.int64)
        else:
            order = np.argsort(codes)
            mcodes = _codes(states[:, list(sigma)], n)
            mirror = order[np.searchsorted(codes[order], mcodes)]
        kept = np.nonzero(codes <= codes[mirror])[0]
        pos = np.empty(states.shape[0], np.int64)
        pos[kept] = np.arange(kept.shape[0])
        pos[mirror[kept]] = pos[kept]
        if trans is None:
            out.append((kept, None, mirror))
        else:
            pstart, pj, pold = trans
            counts = np.diff(pstart)[kept]
            starts = pstart[kept]
            sel = np.repeat(starts - np.concatenate([[0], np.cumsum(counts)[:-1]]), counts) \
                + np.arange(int(counts.sum()))
            new_pstart = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
            out.append((kept, (new_pstart, pj[sel], prev_pos[pold[sel]], pold[sel]), mirror))
        prev_pos = pos
    return out


class Plan:
    """Everything the kernels need, in integer form.

    ``sigma`` is an optional involution of the dimensions that leaves every
    weight and pair factor unchanged; mirrored states then share one
    polynomial and only one of each pair is computed.
    """

    def __init__(self, w: Sequence[object], fact: Factorization, ring: Optional[PolyRing], n: int,
                 sigma: Optional[Sequence[int]] = None):
        self.n = n
        self.box = _Box(ring, _unused_variables(ring, list(w) + [v for table in fact.factors
                                                                   for row in table for v in row]))
        p = len(w)
        self.p = p
        dims = []
        offsets = []
        pos = 0
        for classes in fact.class_of:
            offsets.append(pos)
            pos += max(classes) + 1
            dims.append(max(classes) + 1)
        self.dims = pos
        proj = np.zeros((p, pos), np.int64)
        for c, classes in enumerate(fact.class_of):
            for j in range(p):
                proj[j, offsets[c] + classes[j]] = 1
        self.proj = proj
        box = self.box
        w_terms = [box.terms(v) for v in w]
        g_terms = [[None] * pos for _ in range(p)]
        for c, table in enumerate(fact.factors):
            for j in range(p):
                for a in range(dims[c]):
                    g_terms[j][offsets[c] + a] = box.terms(table[j][a])
        self.dw = _denominator(v for t in w_terms for v in t.values())
        # one denominator per factor keeps integer coefficients small
        self.dg = []
        for c in range(len(fact.factors)):
            self.dg.append(_denominator(v for j in range(p) for a in range(dims[c])
                                        for v in g_terms[j][offsets[c] + a].values()))
        self.w_int = [{k: int(mpq(v) * self.dw) for k, v in t.items()} for t in w_terms]
        self.g_int = [[None] * pos for _ in range(p)]
        for c in range(len(fact.factors)):
            for j in range(p):
                for a in range(dims[c]):
                    t = g_terms[j][offsets[c] + a]
                    self.g_int[j][offsets[c] + a] = {k: int(mpq(v) * self.dg[c]) for k, v in t.items()}
        self.zero = np.array([[not self.g_int[j][a] for a in range(pos)] for j in range(p)], dtype=np.bool_)
        self.one = np.array([[self.g_int[j][a] == {0: self._dgof(a, offsets)} for a in range(pos)]
                             for j in range(p)], dtype=np.bool_)
        self.offsets = offsets
        self.levels, self.level1_of = _states(proj, n)
        self._filter_zero()
        self.folded = _fold(self.levels, sigma, n)

    def _dgof(self, a: int, offsets: List[int]) -> int:
        c = max(i for i, off in enumerate(offsets) if off <= a)
        return self.dg[c]

    def _filter_zero(self):
        """Drop transitions that multiply by a zero factor."""
        for i in range(1, len(self.levels)):
            states, (pstart, pj, pold) = self.levels[i]
            old = self.levels[i - 1][0]
            bad = (self.zero[pj] & (old[pold] > 0)).any(axis=1)
            if bad.any():
                keep = ~bad
                counts = np.diff(pstart)
                owner = np.repeat(np.arange(len(counts)), counts)
                new_counts = np.bincount(owner[keep], minlength=len(counts))
                pstart = np.concatenate([[0], np.cumsum(new_counts)]).astype(np.int64)
                self.levels[i] = (states, (pstart, pj[keep], pold[keep]))

    def scale(self):
        """The recursion computes ``dw**n * prod_c dg_c**C(n,2)`` times the answer."""
        pairs = self.n * (self.n - 1) // 2
        s = mpz(self.dw) ** self.n
        for d in self.dg:
            s *= mpz(d) ** pairs
        return s

    # -- bound ------------------------------------------------------------------
    def log2_bound(self) -> np.ndarray:
        """log2 of an l1 bound on each final state's polynomial."""
        p, dims = self.p, self.dims
        lognorm = np.array([[_log2_l1(self.g_int[j][a]) if self.g_int[j][a] else 0.0
                             for a in range(dims)] for j in range(p)])
        logw = np.array([_log2_l1(t) for t in self.w_int])
        states, _ = self.levels[0]
        l1 = np.full(states.shape[0], -np.inf)
        for j in range(p):
            s = self.level1_of[j]
            l1[s] = np.logaddexp2(l1[s], logw[j])
        for i in range(1, len(self.levels)):
            new_states, (pstart, pj, pold) = self.levels[i]
            l1 = _bound_level(new_states.shape[0], pstart, pj, pold, l1,
                              self.levels[i - 1][0], lognorm, logw)
        return l1

    # -- one prime ------------------------------------------------------------------
    def target(self, wanted: Optional[Dict[str, Sequence[int]]]):
        """Arrays for :func:`_target_level`, or ``None`` when restricting the
        last level to ``wanted`` degrees would not save work."""
        box = self.box
        if not wanted or box.ring is None or self.n < 2:
            return None
        cdims: List[int] = []
        allowed: List[List[int]] = []
        for name, degrees in sorted(wanted.items()):
            i = box.ring.index(name)
            keep = sorted({d for d in degrees if 0 <= d <= box.limits[i]})
            if len(keep) == box.limits[i] + 1:
                continue
            cdims.append(i)
            allowed.append(keep)
        if not cdims:
            return None
        want = np.array(list(itertools.product(*allowed)), np.int64).reshape(-1, len(cdims))
        if want.shape[0] > _MAX_TARGETS:
            return None
        idx = np.arange(box.size, dtype=np.int64)
        ccomp = np.empty((box.size, len(cdims)), np.int64)
        cstride = np.empty(len(cdims), np.int64)
        csize = 1
        for c, i in enumerate(cdims):
            ccomp[:, c] = (idx // box.strides[i]) % (box.limits[i] + 1)
            cstride[c] = csize
            csize *= box.limits[i] + 1
        cidx = ccomp @ cstride
        return ccomp, cidx, cstride, csize, want

    def run(self, prime: int, gid: np.ndarray, n_groups: int, target=None) -> np.ndarray:
        """Final table modulo ``prime``, summed per group: ``(n_groups, box)``.
        With ``target`` only the wanted coefficients are filled in."""
        box = self.box
        p, dims, n = self.p, self.dims, self.n
        powers = [[[None] * (n + 1) for _ in range(dims)] for _ in range(p)]
        pool_k: List[int] = []
        pool_v: List[int] = []
        fstart = np.zeros((p, dims, n + 1), np.int64)
        fend = np.zeros((p, dims, n + 1), np.int64)
        usepow = np.zeros((p, dims, n + 1), np.bool_)
        onescale = np.ones((p, dims, n + 1), np.int64)
        for j in range(p):
            for a in range(dims):
                base = {k: v % prime for k, v in self.g_int[j][a].items() if v % prime}
                cur = {0: 1}
                for e in range(1, n):
                    cur = _dict_mul(cur, base, box, prime)
                    powers[j][a][e] = cur
                    fstart[j, a, e] = len(pool_k)
                    for k in sorted(cur):
                        pool_k.append(k)
                        pool_v.append(_signed(cur[k], prime))
                    fend[j, a, e] = len(pool_k)
                    usepow[j, a, e] = e > 1 and len(cur) <= e * len(base)
                    if self.one[j, a]:
                        onescale[j, a, e] = cur.get(0, 0)
        fkeys = np.array(pool_k, np.int64)
        fvals = np.array(pool_v, np.int64)
        wk: List[int] = []
        wv: List[int] = []
        wstart = np.zeros(p, np.int64)
        wend = np.zeros(p, np.int64)
        for j, t in enumerate(self.w_int):
            wstart[j] = len(wk)
            for k in sorted(t):
                if t[k] % prime:
                    wk.append(k)
                    wv.append(_signed(t[k] % prime, prime))
            wend[j] = len(wk)
        wkeys = np.array(wk, np.int64)
        wvals = np.array(wv, np.int64)

        # level one
        states, _ = self.levels[0]
        acc: List[Dict[int, int]] = [dict() for _ in range(states.shape[0])]
        for j in range(p):
            s = self.level1_of[j]
            for k, v in self.w_int[j].items():
                acc[s][k] = (acc[s].get(k, 0) + v) % prime
        offs = [0]
        keys: List[int] = []
        vals: List[int] = []
        for s in self.folded[0][0]:
            d = acc[s]
            for k in sorted(d):
                if d[k]:
                    keys.append(k)
                    vals.append(d[k])
            offs.append(len(keys))
        offs_a = np.array(offs, np.int64)
        keys_a = np.array(keys, np.int32)
        vals_a = np.array(vals, np.int32)
        if len(self.levels) == 1:
            return _group(offs_a, keys_a, vals_a, gid, n_groups, prime, box.size)
        none = np.zeros((0, 1), np.int64)
        for i in range(1, len(self.levels)):
            kept, (pstart, pj, pold, kidx), _ = self.folded[i]
            old_states = self.levels[i - 1][0]
            last = i == len(self.levels) - 1
            gdense = np.zeros((n_groups, box.size), np.int64) if last else none
            if last and target is not None:
                _target_level(kept.shape[0], pstart, pj, pold, kidx, offs_a, keys_a, vals_a,
                              old_states, fstart, fend, fkeys, fvals, usepow, self.one, onescale,
                              wstart, wend, wkeys, wvals, box.packed, box.trunc_add, box.high,
                              prime, box.size, gid, gdense, *target)
                break
            offs_a, keys_a, vals_a = _level(
                kept.shape[0], pstart, pj, pold, kidx, offs_a, keys_a, vals_a,
                old_states, fstart, fend, fkeys, fvals, usepow, self.one, onescale,
                wstart, wend, wkeys, wvals, box.packed, box.trunc_add, box.high,
                prime, box.size, 2 * len(keys_a) + 1024, gid, gdense)
        return gdense


def _signed(v: int, prime: int) -> int:
    return v - prime if v > prime // 2 else v


def _dict_mul(a: Dict[int, int], b: Dict[int, int], box: _Box, prime: int) -> Dict[int, int]:
    out: Dict[int, int] = {}
    packed = box.packed
    for ka, va in a.items():
        pa = int(packed[ka]) + box.trunc_add
        for kb, vb in b.items():
            if (pa + int(packed[kb])) & box.high:
                continue
            k = ka + kb
            out[k] = (out.get(k, 0) + va * vb) % prime
    return {k: v for k, v in out.items() if v}


def crt_pair(x: int, m: int, r: int, q: int) -> int:
    """The unique value mod ``m*q`` congruent to ``x`` mod ``m`` and ``r`` mod ``q``."""
    t = ((r - x) * pow(m, -1, q)) % q
    return x + m * t


def incremental_grouped(w, fact: Factorization, ring: Optional[PolyRing], n: int,
                        group_masks: Sequence[Sequence[int]] = (),
                        level_sizes: Optional[List[int]] = None,
                        wanted: Optional[Dict[str, Sequence[int]]] = None,
                        sigma: Optional[Sequence[int]] = None):
    """Sum of the final table, split by the counts of the unary predicates
    given as 0/1 masks over cells. Returns ``{group key: exact value}`` where
    a value is a :class:`Poly` over ``ring`` (or a scalar when there is no
    ring) and each group key lists how many elements satisfy each mask.

    ``wanted`` maps ring variables to the degrees the caller will read; other
    degrees of those variables may come back wrong or missing. ``sigma`` is
    a symmetry of the dimensions, see :class:`Plan`."""
    if not len(w):
        return {}
    plan = Plan(w, fact, ring, n, sigma)
    if level_sizes is not None:
        level_sizes.extend(int(states.shape[0]) for states, _ in plan.levels)
    final_states = plan.levels[-1][0]
    # counts per mask from the first factor's classes when it is the cell
    # factor, otherwise the caller supplies masks over dimensions
    masks = np.array(group_masks, dtype=np.int64).reshape(len(group_masks), plan.dims) \
        if len(group_masks) else np.zeros((0, plan.dims), np.int64)
    gkeys = final_states @ masks.T if masks.shape[0] else np.zeros((final_states.shape[0], 0), np.int64)
    uniq, gid = np.unique(gkeys, axis=0, return_inverse=True)
    gid = gid.reshape(-1).astype(np.int64)

    logb = plan.log2_bound()
    bound_bits = -math.inf
    for g in range(uniq.shape[0]):
        sel = logb[gid == g]
        if sel.size:
            m = sel.max()
            if m > -math.inf:
                bound_bits = max(bound_bits, m + math.log2(np.exp2(sel - m).sum()))
    if bound_bits == -math.inf:
        return {tuple(int(x) for x in k): 0 for k in uniq[:0]}
    need = int(math.ceil(bound_bits * (1 + 1e-12) + 1e-9)) + 2
    ps: List[int] = []
    bits = 0.0
    for q in primes(need // 30 + 2):
        ps.append(q)
        bits += math.log2(q)
        if bits > need:
            break

    box = plan.box
    residues: List[np.ndarray] = []
    # a kept final state also stands for its mirror image, which may fall
    # in another group
    kept, _, mirror = plan.folded[-1]
    other = np.where(mirror[kept] != kept, gid[mirror[kept]], -1)
    pairs, pgid = np.unique(np.stack([gid[kept], other], axis=1), axis=0, return_inverse=True)
    pgid = pgid.reshape(-1).astype(np.int64)
    target = plan.target(wanted)
    for q in ps:
        part = plan.run(q, pgid, pairs.shape[0], target)
        res = np.zeros((uniq.shape[0], box.size), np.int64)
        for k, (a, b) in enumerate(pairs):
            res[a] = (res[a] + part[k]) % q
            if b >= 0:
                res[b] = (res[b] + part[k]) % q
        residues.append(res)
    scale = plan.scale()
    out = {}
    for g in range(uniq.shape[0]):
        nz = np.zeros(box.size, dtype=bool)
        for res in residues:
            nz |= res[g] != 0
        idxs = np.nonzero(nz)[0]
        terms = {}
        for idx in idxs:
            x, m = 0, 1
            for q, res in zip(ps, residues):
                x = crt_pair(x, m, int(res[g, idx]), q)
                m *= q
            if x > m // 2:
                x -= m
            if x:
                terms[int(idx)] = mpq(x) / scale
        key = tuple(int(v) for v in uniq[g])
        out[key] = _to_value(terms, box)
    return out


def _to_value(terms: Dict[int, object], box: _Box):
    if box.ring is None or not box.ring.names:
        return normalize_scalar(terms.get(0, 0))
    ring = box.ring
    return ring.from_terms({box.exponents(i): normalize_scalar(c) for i, c in terms.items()})
