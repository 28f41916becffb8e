"""Sparse matrix core: CSC storage, sparse Cholesky, selected inversion, leverage scores.

The factorization is an up-looking LL^T with a greedy minimum-degree
fill-reducing ordering computed once at symbolic analysis; the symbolic
structure (permutation, elimination tree, factor pattern, scatter schedules)
is reused across refactorizations of matrices sharing the same pattern.
Selected inversion computes the entries of the inverse restricted to the
factor pattern by the bottom-up recursion on L D L^T, which is what makes
leverage scores as cheap as the factorization itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NotPositiveDefiniteError


class SparseMatrix:
    """Immutable column-compressed sparse matrix.

    Row indices are strictly increasing within each column; duplicates are
    forbidden in storage (summed at assembly).
    """

    __slots__ = ("n_rows", "n_cols", "indptr", "indices", "data")

    def __init__(self, n_rows, n_cols, indptr, indices, data):
        self.n_rows = int(n_rows)
        self.n_cols = int(n_cols)
        self.indptr = np.asarray(indptr, dtype=np.int64)
        self.indices = np.asarray(indices, dtype=np.int64)
        self.data = np.asarray(data, dtype=np.float64)
        if self.indptr.shape != (self.n_cols + 1,):
            raise ValueError("indptr length must be n_cols + 1")
        if self.indices.shape != self.data.shape:
            raise ValueError("indices and data must have equal length")

    @property
    def nnz(self):
        return self.indices.size

    @classmethod
    def from_triplets(cls, n_rows, n_cols, entries):
        """Assemble from (row, col, value) triplets; duplicates are summed."""
        mat, _ = compress_triplets(n_rows, n_cols, entries)
        return mat

    @classmethod
    def from_dense(cls, dense):
        dense = np.asarray(dense, dtype=np.float64)
        rows, cols = np.nonzero(dense)
        return cls.from_triplets(
            dense.shape[0], dense.shape[1], list(zip(rows, cols, dense[rows, cols]))
        )

    def to_dense(self):
        out = np.zeros((self.n_rows, self.n_cols))
        for j in range(self.n_cols):
            s, e = self.indptr[j], self.indptr[j + 1]
            out[self.indices[s:e], j] = self.data[s:e]
        return out

    def to_triplets(self):
        rows = self.indices.copy()
        cols = np.repeat(np.arange(self.n_cols), np.diff(self.indptr))
        return rows, cols, self.data.copy()

    def col(self, j):
        """Row indices and values of column j (views, do not mutate)."""
        s, e = self.indptr[j], self.indptr[j + 1]
        return self.indices[s:e], self.data[s:e]

    def matvec(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_cols,):
            raise ValueError(f"matvec shape mismatch: {x.shape} vs {self.n_cols}")
        if self.nnz == 0:
            return np.zeros(self.n_rows)
        per_entry = self.data * np.repeat(x, np.diff(self.indptr))
        return np.bincount(self.indices, weights=per_entry, minlength=self.n_rows)

    def matvec_t(self, x):
        """Transposed product ``A^T x``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n_rows,):
            raise ValueError(f"matvec_t shape mismatch: {x.shape} vs {self.n_rows}")
        cs = np.concatenate(([0.0], np.cumsum(self.data * x[self.indices])))
        return cs[self.indptr[1:]] - cs[self.indptr[:-1]]

    def transpose(self):
        rows, cols, vals = self.to_triplets()
        return SparseMatrix.from_triplets(
            self.n_cols, self.n_rows, list(zip(cols, rows, vals))
        )


def compress_triplets(n_rows, n_cols, entries):
    """Canonical CSC from triplets plus the slot map triplet -> storage position."""
    if len(entries) == 0:
        return (
            SparseMatrix(n_rows, n_cols, np.zeros(n_cols + 1, dtype=np.int64), [], []),
            np.zeros(0, dtype=np.int64),
        )
    rows = np.asarray([e[0] for e in entries], dtype=np.int64)
    cols = np.asarray([e[1] for e in entries], dtype=np.int64)
    vals = np.asarray([e[2] for e in entries], dtype=np.float64)
    if rows.min() < 0 or rows.max() >= n_rows or cols.min() < 0 or cols.max() >= n_cols:
        raise ValueError("triplet index out of range")
    order = np.lexsort((rows, cols))
    r, c, v = rows[order], cols[order], vals[order]
    new_group = np.ones(r.size, dtype=bool)
    new_group[1:] = (r[1:] != r[:-1]) | (c[1:] != c[:-1])
    gid = np.cumsum(new_group) - 1
    data = np.bincount(gid, weights=v)
    u_rows = r[new_group]
    u_cols = c[new_group]
    counts = np.bincount(u_cols, minlength=n_cols)
    indptr = np.concatenate(([0], np.cumsum(counts)))
    slots = np.empty(r.size, dtype=np.int64)
    slots[order] = gid
    return SparseMatrix(n_rows, n_cols, indptr, u_rows, data), slots


def identity(n):
    return SparseMatrix(
        n, n, np.arange(n + 1), np.arange(n), np.ones(n)
    )


def _minimum_degree_order(n, indptr, indices):
    """Greedy minimum-degree ordering of a symmetric pattern.

    Eliminating a vertex turns its neighborhood into a clique; ties break on
    the smallest index so the ordering is deterministic.
    """
    adj = [set() for _ in range(n)]
    for j in range(n):
        for i in indices[indptr[j]:indptr[j + 1]]:
            if i != j:
                adj[i].add(j)
                adj[j].add(i)
    alive = np.ones(n, dtype=bool)
    perm = np.empty(n, dtype=np.int64)
    degs = np.array([len(a) for a in adj], dtype=np.int64)
    for step in range(n):
        best = -1
        best_deg = n + 1
        for v in range(n):
            if alive[v] and degs[v] < best_deg:
                best, best_deg = v, degs[v]
        perm[step] = best
        alive[best] = False
        nbrs = adj[best]
        for u in nbrs:
            adj[u].discard(best)
        nbr_list = list(nbrs)
        for a_i, u in enumerate(nbr_list):
            adj[u].update(w for w in nbr_list[a_i + 1:] if w != u)
        for u in nbr_list:
            degs[u] = len(adj[u])
        adj[best] = set()
    return perm


class CholeskySymbolic:
    """Pattern-level analysis of P M P^T = L L^T, reusable across numeric phases."""

    def __init__(self, n, indptr, indices, order=None):
        self.n = n
        self.pattern_indptr = np.asarray(indptr, dtype=np.int64)
        self.pattern_indices = np.asarray(indices, dtype=np.int64)
        if order is None:
            order = _minimum_degree_order(n, self.pattern_indptr, self.pattern_indices)
        self.perm = np.asarray(order, dtype=np.int64)
        self.pinv = np.empty(n, dtype=np.int64)
        self.pinv[self.perm] = np.arange(n)
        self._build_upper_scatter()
        self._build_etree_and_pattern()
        self._selinv_schedule = None

    def _build_upper_scatter(self):
        # column k of C = PMP^T, upper-triangle rows (permuted), with source
        # positions into the original data array
        n = self.n
        cup_rows = []
        cup_src = []
        cup_ptr = np.zeros(n + 1, dtype=np.int64)
        for k in range(n):
            jorig = self.perm[k]
            s, e = self.pattern_indptr[jorig], self.pattern_indptr[jorig + 1]
            prows = self.pinv[self.pattern_indices[s:e]]
            keep = prows <= k
            cup_rows.append(prows[keep])
            cup_src.append(np.arange(s, e)[keep])
            cup_ptr[k + 1] = cup_ptr[k] + int(keep.sum())
        self.cup_ptr = cup_ptr
        self.cup_rows = np.concatenate(cup_rows) if cup_rows else np.zeros(0, np.int64)
        self.cup_src = np.concatenate(cup_src) if cup_src else np.zeros(0, np.int64)

    def _build_etree_and_pattern(self):
        n = self.n
        parent = np.full(n, -1, dtype=np.int64)
        ancestor = np.full(n, -1, dtype=np.int64)
        for k in range(n):
            for i in self.cup_rows[self.cup_ptr[k]:self.cup_ptr[k + 1]]:
                while i != -1 and i < k:
                    nxt = ancestor[i]
                    ancestor[i] = k
                    if nxt == -1:
                        parent[i] = k
                    i = nxt
        self.parent = parent

        # row patterns of L via etree reach; stored in topological order
        marked = np.full(n, -1, dtype=np.int64)
        row_patterns = []
        col_counts = np.ones(n, dtype=np.int64)  # diagonals
        stack = np.empty(n, dtype=np.int64)
        for k in range(n):
            marked[k] = k
            pat = []
            for i in self.cup_rows[self.cup_ptr[k]:self.cup_ptr[k + 1]]:
                if i == k:
                    continue
                ln = 0
                while marked[i] != k:
                    stack[ln] = i
                    ln += 1
                    marked[i] = k
                    i = parent[i]
                pat.extend(stack[:ln][::-1])
            # reverse-push order above yields ancestors first per path; a plain
            # ascending sort is a valid topological order for an etree
            pat = np.sort(np.asarray(pat, dtype=np.int64))
            row_patterns.append(pat)
            col_counts[pat] += 1
        self.row_pattern = row_patterns
        self.L_indptr = np.concatenate(([0], np.cumsum(col_counts)))
        L_indices = np.empty(self.L_indptr[-1], dtype=np.int64)
        cursor = self.L_indptr[:-1].copy()
        for k in range(n):
            L_indices[cursor[k]] = k  # diagonal first
            cursor[k] += 1
        for k in range(n):
            for i in row_patterns[k]:
                L_indices[cursor[i]] = k
                cursor[i] += 1
        self.L_indices = L_indices

    def matches(self, mat):
        return (
            mat.n_rows == self.n
            and mat.n_cols == self.n
            and mat.indptr.shape == self.pattern_indptr.shape
            and np.array_equal(mat.indptr, self.pattern_indptr)
            and np.array_equal(mat.indices, self.pattern_indices)
        )

    def entry_pos(self, i, j):
        """Storage position of L[i, j] (permuted indices, i >= j)."""
        s, e = self.L_indptr[j], self.L_indptr[j + 1]
        if i == j:
            return s
        t = s + 1 + np.searchsorted(self.L_indices[s + 1:e], i)
        if t >= e or self.L_indices[t] != i:
            raise AssertionError(f"entry ({i},{j}) outside factor pattern")
        return t

    def selinv_schedule(self):
        """Per-column position tables for the selected-inverse recursion (cached)."""
        if self._selinv_schedule is not None:
            return self._selinv_schedule
        sched = []
        for j in range(self.n):
            s, e = self.L_indptr[j], self.L_indptr[j + 1]
            rows_off = self.L_indices[s + 1:e]
            pos = np.empty((e - s - 1, rows_off.size), dtype=np.int64)
            for t_local, i in enumerate(rows_off):
                for k_local, k in enumerate(rows_off):
                    a, b = (i, k) if i >= k else (k, i)
                    pos[t_local, k_local] = self.entry_pos(a, b)
            sched.append(pos)
        self._selinv_schedule = sched
        return sched


@dataclass
class CholeskyFactor:
    """Numeric factor L with its symbolic structure; L L^T = P M P^T."""

    symbolic: CholeskySymbolic
    L_data: np.ndarray

    @property
    def n(self):
        return self.symbolic.n

    @property
    def perm(self):
        return self.symbolic.perm

    @property
    def L(self):
        s = self.symbolic
        return SparseMatrix(s.n, s.n, s.L_indptr, s.L_indices, self.L_data)

    def log_det(self):
        """log det of the factored matrix M (twice the log of the L diagonal)."""
        diag = self.L_data[self.symbolic.L_indptr[:-1]]
        return 2.0 * float(np.sum(np.log(diag)))

    def solve(self, rhs):
        return solve(self, rhs)


def _numeric_factor(symb, data, pivot_floor, skip_small=False):
    """Up-looking numeric phase on a fixed symbolic pattern.

    With ``skip_small`` the factorization continues past small pivots,
    recording them; the resulting factor is that of the principal submatrix
    of the kept indices (skipped columns carry explicit zeros).
    """
    n = symb.n
    L_indptr, L_indices = symb.L_indptr, symb.L_indices
    L_data = np.zeros(L_indices.size)
    cursor = L_indptr[:-1] + 1  # next free slot per column (diagonal at slot 0)
    x = np.zeros(n)
    skipped = np.zeros(n, dtype=bool)
    for k in range(n):
        ks, ke = symb.cup_ptr[k], symb.cup_ptr[k + 1]
        x[symb.cup_rows[ks:ke]] = data[symb.cup_src[ks:ke]]
        d = x[k]
        x[k] = 0.0
        for i in symb.row_pattern[k]:
            xi = x[i]
            x[i] = 0.0
            if skipped[i]:
                L_data[cursor[i]] = 0.0
                cursor[i] += 1
                continue
            lki = xi / L_data[L_indptr[i]]
            s, e = L_indptr[i] + 1, cursor[i]
            if e > s:
                x[L_indices[s:e]] -= L_data[s:e] * lki
            d -= lki * lki
            L_data[cursor[i]] = lki
            cursor[i] += 1
        if d <= pivot_floor:
            if not skip_small:
                raise NotPositiveDefiniteError(k, d)
            skipped[k] = True
            L_data[L_indptr[k]] = 1.0
        else:
            L_data[L_indptr[k]] = math.sqrt(d)
    return L_data, skipped


def cholesky_factorize(M, reuse_symbolic=None, pivot_floor=0.0):
    """Sparse Cholesky of a symmetric positive definite matrix.

    Parameters
    ----------
    M : SparseMatrix
        Symmetric with both triangles stored.
    reuse_symbolic : CholeskyFactor or CholeskySymbolic, optional
        Prior analysis for the same pattern; only the numeric phase runs.
    pivot_floor : float
        Raise ``NotPositiveDefiniteError`` when a pivot falls at or below
        this value. The default 0.0 rejects only numerically indefinite
        input; rank decisions pass an explicit tolerance.
    """
    if M.n_rows != M.n_cols:
        raise ValueError("matrix must be square")
    if reuse_symbolic is not None:
        symb = (
            reuse_symbolic.symbolic
            if isinstance(reuse_symbolic, CholeskyFactor)
            else reuse_symbolic
        )
        if not symb.matches(M):
            raise ValueError("symbolic pattern does not match matrix")
    else:
        symb = CholeskySymbolic(M.n_rows, M.indptr, M.indices)
    L_data, _ = _numeric_factor(symb, M.data, pivot_floor, skip_small=False)
    return CholeskyFactor(symb, L_data)


def solve(factor, rhs):
    """Solve M z = rhs given the factor of M (permutation applied internally)."""
    symb = factor.symbolic
    rhs = np.asarray(rhs, dtype=np.float64)
    if rhs.shape != (symb.n,):
        raise ValueError(f"solve dimension mismatch: {rhs.shape} vs {symb.n}")
    y = rhs[symb.perm].astype(np.float64)
    Lp, Li, Lx = symb.L_indptr, symb.L_indices, factor.L_data
    n = symb.n
    for j in range(n):
        s, e = Lp[j], Lp[j + 1]
        y[j] /= Lx[s]
        if e > s + 1:
            y[Li[s + 1:e]] -= Lx[s + 1:e] * y[j]
    for j in range(n - 1, -1, -1):
        s, e = Lp[j], Lp[j + 1]
        if e > s + 1:
            y[j] -= float(Lx[s + 1:e] @ y[Li[s + 1:e]])
        y[j] /= Lx[s]
    out = np.empty(n)
    out[symb.perm] = y
    return out


@dataclass
class SelectedInverse:
    """Entries of (L L^T)^{-1} on the factor pattern (permuted lower triangle)."""

    symbolic: CholeskySymbolic
    values: np.ndarray

    def entry(self, i, j):
        """Inverse entry at permuted position (i, j); symmetric lookup."""
        a, b = (i, j) if i >= j else (j, i)
        return self.values[self.symbolic.entry_pos(a, b)]

    def pattern_entries(self):
        """(rows, cols, values) of the stored lower-triangle pattern."""
        s = self.symbolic
        cols = np.repeat(np.arange(s.n), np.diff(s.L_indptr))
        return s.L_indices.copy(), cols, self.values.copy()


def selected_inverse(factor):
    """Takahashi selected inversion on the pattern of L.

    Writes Z[i,j] = delta_ij / d_j - sum_{k>j} Z[i,k] L0[k,j] proceeding from
    the last column to the first; the factor pattern is closed under the
    recursion, so no entries outside it are ever needed.
    """
    symb = factor.symbolic
    Lp, Li, Lx = symb.L_indptr, symb.L_indices, factor.L_data
    sched = symb.selinv_schedule()
    Z = np.zeros_like(Lx)
    for j in range(symb.n - 1, -1, -1):
        s, e = Lp[j], Lp[j + 1]
        ljj = Lx[s]
        dj = ljj * ljj
        if e == s + 1:
            Z[s] = 1.0 / dj
            continue
        l0 = Lx[s + 1:e] / ljj
        pos = sched[j]
        for t_local in range(e - s - 2, -1, -1):
            Z[s + 1 + t_local] = -float(Z[pos[t_local]] @ l0)
        Z[s] = 1.0 / dj - float(Z[s + 1:e] @ l0)
    return SelectedInverse(symb, Z)


class GramBuilder:
    """Assembly schedule for B = A diag(w) A^T with an x-independent pattern.

    The triplet structure (row pairs per column of A) is computed once; each
    ``numeric(w)`` call is a vectorized accumulation into the fixed CSC slots.
    """

    def __init__(self, A):
        self.A = A
        m = A.n_rows
        tri_i, tri_j, coeff, owner = [], [], [], []
        for k in range(A.n_cols):
            rows, vals = A.col(k)
            for a in range(rows.size):
                for b in range(rows.size):
                    tri_i.append(rows[a])
                    tri_j.append(rows[b])
                    coeff.append(vals[a] * vals[b])
                    owner.append(k)
        self.coeff = np.asarray(coeff, dtype=np.float64)
        self.owner = np.asarray(owner, dtype=np.int64)
        entries = list(zip(tri_i, tri_j, self.coeff))
        self.pattern, self.slots = compress_triplets(m, m, entries)

    def numeric(self, w):
        """Values of A diag(w) A^T on the fixed pattern."""
        if self.coeff.size == 0:
            return self.pattern
        data = np.bincount(
            self.slots,
            weights=self.coeff * w[self.owner],
            minlength=self.pattern.nnz,
        )
        return SparseMatrix(
            self.pattern.n_rows,
            self.pattern.n_cols,
            self.pattern.indptr,
            self.pattern.indices,
            data,
        )


class LeverageSchedule:
    """Precomputed index tables mapping a selected inverse to leverage scores.

    sigma_k = (1/g_k) * a_k^T (A g^{-1} A^T)^{-1} a_k, accumulated from the
    lower-triangle selected inverse with off-diagonal entries counted twice
    (equivalently: halve the diagonal and double everything).
    """

    def __init__(self, A, symbolic):
        pos, coeff, owner = [], [], []
        pinv = symbolic.pinv
        for k in range(A.n_cols):
            rows, vals = A.col(k)
            prows = pinv[rows]
            for a in range(rows.size):
                for b in range(a, rows.size):
                    i, j = prows[a], prows[b]
                    if i < j:
                        i, j = j, i
                    pos.append(symbolic.entry_pos(i, j))
                    coeff.append(
                        vals[a] * vals[b] * (1.0 if a == b else 2.0)
                    )
                    owner.append(k)
        self.pos = np.asarray(pos, dtype=np.int64)
        self.coeff = np.asarray(coeff, dtype=np.float64)
        self.owner = np.asarray(owner, dtype=np.int64)
        self.n = A.n_cols

    def scores(self, selinv, g_diag):
        raw = np.bincount(
            self.owner, weights=self.coeff * selinv.values[self.pos], minlength=self.n
        )
        return raw / g_diag


def leverage_scores(A, g_diag):
    """Diagonal of g^{-1/2} A^T (A g^{-1} A^T)^{-1} A g^{-1/2} via selected inversion.

    Entries lie in [0, 1] and sum to the number of (independent) rows of A.
    """
    g_diag = np.asarray(g_diag, dtype=np.float64)
    if g_diag.shape != (A.n_cols,):
        raise ValueError("g_diag length must equal the number of columns")
    if np.any(g_diag <= 0):
        raise ValueError("g_diag must be strictly positive")
    if A.n_rows == 0:
        return np.zeros(A.n_cols)
    gram = GramBuilder(A)
    M = gram.numeric(1.0 / g_diag)
    factor = cholesky_factorize(M)
    sel = selected_inverse(factor)
    sched = LeverageSchedule(A, factor.symbolic)
    return sched.scores(sel, g_diag)


def dependent_rows(A, tol):
    """A maximal set of rows whose removal leaves A A^T positive definite.

    Factors A A^T with the fixed fill-reducing ordering, skipping any
    elimination whose pivot falls at or below ``tol`` times the largest
    diagonal; the skipped rows (in original indices) are reported.
    Deterministic for a fixed ordering.
    """
    if A.n_rows == 0:
        return set()
    gram = GramBuilder(A)
    M = gram.numeric(np.ones(A.n_cols))
    diag_pos = []
    for i in range(M.n_cols):
        s, e = M.indptr[i], M.indptr[i + 1]
        hit = np.searchsorted(M.indices[s:e], i)
        diag_pos.append(s + hit if hit < e - s and M.indices[s + hit] == i else -1)
    diag = np.array(
        [M.data[p] if p >= 0 else 0.0 for p in diag_pos]
    )
    floor = tol * (diag.max() if diag.size else 1.0)
    symb = CholeskySymbolic(M.n_rows, M.indptr, M.indices)
    _, skipped = _numeric_factor(symb, M.data, floor, skip_small=True)
    return {int(symb.perm[k]) for k in np.nonzero(skipped)[0]}
