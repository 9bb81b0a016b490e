"""Standard-form cone programs and a small affine-expression layer to build them.

A program is stored as

    minimize    c'x
    subject to  G x + s = h,   A x = b,   s in K

with ``K`` the product of a nonnegative orthant, second-order cones and real
symmetric PSD cones, in that order. PSD blocks are stored as full column-major
``n*n`` vectors so the trace inner product is the plain dot product. Complex
Hermitian blocks are lowered through :func:`~answipt.linalg.hermitian_embed`.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np

from .linalg import hermitian_unembed


class Affine:
    """Affine function of the real decision vector with array values.

    ``terms`` maps the offset of a variable block to a coefficient array of
    shape ``(k, *shape)``: entry ``j`` multiplies decision variable
    ``offset + j``. ``const`` holds the offset value. Values may be complex.
    """

    __slots__ = ("terms", "const")
    # make numpy defer to our reflected operators (ndarray @ Affine etc.)
    __array_ufunc__ = None

    def __init__(self, terms=None, const=0.0):
        self.const = np.asarray(const)
        self.terms = {} if terms is None else terms

    @staticmethod
    def lift(v) -> "Affine":
        return v if isinstance(v, Affine) else Affine({}, np.asarray(v))

    @property
    def shape(self):
        return self.const.shape

    def _map(self, f, shape=None) -> "Affine":
        """Apply a per-value linear map ``f`` (written for one value) to every term."""
        const = f(self.const)
        nd = self.const.ndim
        terms = {}
        for i, c in self.terms.items():
            terms[i] = np.stack([f(c[j]) for j in range(c.shape[0])]) if nd == 0 else f(c)
        return Affine(terms, const)

    def _pad(self, c, ndim):
        """View a coefficient array with value dimensions left-padded to ``ndim``."""
        extra = ndim - self.const.ndim
        return c.reshape((c.shape[0],) + (1,) * extra + c.shape[1:])

    def __add__(self, other):
        other = Affine.lift(other)
        shape = np.broadcast_shapes(self.shape, other.shape)
        nd = len(shape)
        terms = {}
        for e in (self, other):
            for i, c in e.terms.items():
                c = np.broadcast_to(e._pad(c, nd), (c.shape[0],) + shape)
                terms[i] = terms[i] + c if i in terms else c
        return Affine(terms, self.const + other.const)

    __radd__ = __add__

    def __neg__(self):
        return Affine({i: -c for i, c in self.terms.items()}, -self.const)

    def __sub__(self, other):
        return self + (-Affine.lift(other))

    def __rsub__(self, other):
        return Affine.lift(other) - self

    def __mul__(self, k):
        if isinstance(k, Affine):
            raise TypeError("product of two affine expressions is not affine")
        k = np.asarray(k)
        nd = max(self.const.ndim, k.ndim)
        return Affine({i: self._pad(c, nd) * k for i, c in self.terms.items()}, self.const * k)

    __rmul__ = __mul__

    def __truediv__(self, k):
        return self * (1.0 / np.asarray(k))

    def __matmul__(self, M):
        M = np.asarray(M)
        if self.const.ndim != 2:
            raise ValueError("matrix products need 2-D expressions")
        return Affine({i: c @ M for i, c in self.terms.items()}, self.const @ M)

    def __rmatmul__(self, M):
        M = np.asarray(M)
        if self.const.ndim != 2:
            raise ValueError("matrix products need 2-D expressions")
        return Affine({i: M @ c for i, c in self.terms.items()}, M @ self.const)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return Affine({i: c[(slice(None),) + idx] for i, c in self.terms.items()}, self.const[idx])

    @property
    def H(self):
        if self.const.ndim < 2:
            return Affine({i: np.conj(c) for i, c in self.terms.items()}, np.conj(self.const))
        return Affine(
            {i: np.conj(np.swapaxes(c, -1, -2)) for i, c in self.terms.items()},
            np.conj(np.swapaxes(self.const, -1, -2)),
        )

    @property
    def real(self):
        return Affine({i: np.real(c) for i, c in self.terms.items()}, np.real(self.const))

    @property
    def imag(self):
        return Affine({i: np.imag(c) for i, c in self.terms.items()}, np.imag(self.const))

    def trace(self):
        return Affine(
            {i: np.trace(c, axis1=-2, axis2=-1) for i, c in self.terms.items()}, np.trace(self.const)
        )

    def reshape(self, *shape):
        """Column-major (Fortran-order) reshape of the value."""
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        const = np.reshape(self.const, shape, order="F")
        terms = {}
        for i, c in self.terms.items():
            # k axis last so the Fortran-order walk never mixes variables
            moved = np.moveaxis(c, 0, -1)
            terms[i] = np.moveaxis(np.reshape(moved, const.shape + (c.shape[0],), order="F"), -1, 0)
        return Affine(terms, const)

    def quad(self, h):
        """``Re(h^H X h)`` for a constant vector ``h``."""
        h = np.asarray(h, dtype=complex).reshape(-1)
        return Affine(
            {i: np.real(np.einsum("i,kij,j->k", h.conj(), c, h)) for i, c in self.terms.items()},
            np.real(h.conj() @ self.const @ h),
        )

    def value(self, x) -> np.ndarray:
        x = np.asarray(x)
        out = np.array(self.const, dtype=np.result_type(self.const, *self.terms.values()))
        for i, c in self.terms.items():
            out = out + np.tensordot(x[i : i + c.shape[0]], c, axes=1)
        return out

    def is_real(self) -> bool:
        return all(np.all(np.imag(v) == 0) for v in [self.const, *self.terms.values()])


def concat(parts) -> Affine:
    """Concatenate expressions after flattening each (column-major)."""
    parts = [Affine.lift(p) for p in parts]
    parts = [p.reshape(-1) if p.shape != () else p.reshape(1) for p in parts]
    sizes = [p.shape[0] for p in parts]
    dtype = np.result_type(*[p.const for p in parts], *[c for p in parts for c in p.terms.values()])
    const = np.concatenate([np.asarray(p.const, dtype) for p in parts])
    terms: dict = {}
    off = 0
    for p, m in zip(parts, sizes):
        for i, cf in p.terms.items():
            if i not in terms:
                terms[i] = np.zeros((cf.shape[0], const.size), dtype)
            elif terms[i].shape[0] != cf.shape[0]:
                raise ValueError("inconsistent variable block sizes")
            terms[i][:, off : off + m] += cf
        off += m
    return Affine(terms, const)


def bmat(blocks) -> Affine:
    """Block matrix of 2-D or scalar affine expressions/constants; ``None`` is zero."""
    rows, cols = len(blocks), len(blocks[0])
    heights = [None] * rows
    widths = [None] * cols
    for r in range(rows):
        for c in range(cols):
            b = blocks[r][c]
            if b is None:
                continue
            shp = np.shape(b.const if isinstance(b, Affine) else b)
            if len(shp) == 0:
                shp = (1, 1)
            elif len(shp) != 2:
                raise ValueError("bmat blocks must be scalars or 2-D")
            heights[r] = shp[0] if heights[r] is None else heights[r]
            widths[c] = shp[1] if widths[c] is None else widths[c]
    if None in heights or None in widths:
        raise ValueError("every block row and column needs at least one sized block")
    terms: dict = {}
    const = np.zeros((sum(heights), sum(widths)), dtype=complex)
    r0 = 0
    for r in range(rows):
        c0 = 0
        for c in range(cols):
            b = blocks[r][c]
            if b is not None:
                b = Affine.lift(b)
                hh, ww = heights[r], widths[c]
                const[r0 : r0 + hh, c0 : c0 + ww] = np.reshape(b.const, (hh, ww))
                for i, cf in b.terms.items():
                    if i not in terms:
                        terms[i] = np.zeros((cf.shape[0],) + const.shape, dtype=complex)
                    terms[i][:, r0 : r0 + hh, c0 : c0 + ww] = np.reshape(cf, (cf.shape[0], hh, ww))
            c0 += widths[c]
        r0 += heights[r]
    return Affine(terms, const)


@dataclass(frozen=True)
class VarInfo:
    name: str
    kind: str  # "scalar" or "hermitian"
    offset: int
    n: int = 1

    @property
    def size(self) -> int:
        return 1 if self.kind == "scalar" else self.n * self.n


@dataclass(frozen=True)
class Block:
    """One cone block: type ("l", "q", "s"), real dimension, label, row offset."""

    cone: str
    dim: int
    label: str
    offset: int
    complex_n: int = 0  # >0 when the PSD block embeds an n x n Hermitian matrix

    @property
    def rows(self) -> int:
        return self.dim * self.dim if self.cone == "s" else self.dim


@dataclass(frozen=True, eq=False)
class ConicProgram:
    """Immutable cone program ``min c'x : Gx + s = h, Ax = b, s in K``.

    ``objective_sign`` maps the internal minimisation value to the user-facing
    objective (``-1`` for the maximisation problems built here).
    """

    c: np.ndarray
    G: np.ndarray
    h: np.ndarray
    A: np.ndarray
    b: np.ndarray
    blocks: tuple
    variables: dict
    objective_sign: float = -1.0
    meta: dict = field(default_factory=dict)

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def dims(self) -> dict:
        return {
            "l": sum(b.dim for b in self.blocks if b.cone == "l"),
            "q": [b.dim for b in self.blocks if b.cone == "q"],
            "s": [b.dim for b in self.blocks if b.cone == "s"],
        }

    def block(self, label: str) -> Block:
        for b in self.blocks:
            if b.label == label:
                return b
        raise KeyError(label)

    def block_slice(self, blk: Block) -> slice:
        return slice(blk.offset, blk.offset + blk.rows)

    def block_value(self, vec, label: str) -> np.ndarray:
        """Cone-shaped value of ``vec`` (an ``s`` or ``z`` vector) on one block."""
        blk = self.block(label)
        v = np.asarray(vec)[self.block_slice(blk)]
        if blk.cone == "s":
            return v.reshape(blk.dim, blk.dim, order="F")
        return v

    def block_hermitian(self, vec, label: str) -> np.ndarray:
        blk = self.block(label)
        S = self.block_value(vec, label)
        return hermitian_unembed(S) if blk.complex_n else S

    def decode(self, x) -> dict:
        """Map a primal vector to named scalars and Hermitian matrices."""
        out = {}
        for v in self.variables.values():
            if v.kind == "scalar":
                out[v.name] = float(x[v.offset])
            else:
                out[v.name] = hermitian_from_params(x[v.offset : v.offset + v.size], v.n)
        return out

    def objective(self, x) -> float:
        return float(self.objective_sign * (self.c @ x))


def hermitian_param_basis(n: int) -> np.ndarray:
    """Basis matrices ``E_j`` so a Hermitian matrix is ``sum_j x_j E_j``.

    Order: diagonal, then real parts of the strict upper triangle, then
    imaginary parts (both row-major).
    """
    basis = []
    for i in range(n):
        E = np.zeros((n, n), complex)
        E[i, i] = 1
        basis.append(E)
    upper = [(i, j) for i in range(n) for j in range(i + 1, n)]
    for i, j in upper:
        E = np.zeros((n, n), complex)
        E[i, j] = E[j, i] = 1
        basis.append(E)
    for i, j in upper:
        E = np.zeros((n, n), complex)
        E[i, j] = 1j
        E[j, i] = -1j
        basis.append(E)
    return np.array(basis)


def hermitian_from_params(p, n: int) -> np.ndarray:
    return np.tensordot(np.asarray(p, dtype=float), hermitian_param_basis(n), axes=1)


def hermitian_to_params(X) -> np.ndarray:
    X = np.asarray(X, dtype=complex)
    n = X.shape[0]
    iu = np.triu_indices(n, 1)
    return np.concatenate([np.real(np.diag(X)), X.real[iu], X.imag[iu]])


class ProgramBuilder:
    """Declare variables, add cone constraints, then :meth:`build`."""

    def __init__(self):
        self._n = 0
        self._vars: dict = {}
        self._lp: list = []
        self._soc: list = []
        self._psd: list = []
        self._eq: list = []
        self._labels: set = set()

    def scalar(self, name: str) -> Affine:
        info = VarInfo(name, "scalar", self._n)
        self._register(info)
        return Affine({info.offset: np.ones(1)}, np.array(0.0))

    def hermitian(self, name: str, n: int) -> Affine:
        info = VarInfo(name, "hermitian", self._n, n)
        self._register(info)
        return Affine({info.offset: hermitian_param_basis(n)}, np.zeros((n, n), complex))

    def _register(self, info: VarInfo):
        if info.name in self._vars:
            raise ValueError(f"duplicate variable {info.name!r}")
        self._vars[info.name] = info
        self._n += info.size

    def _label(self, label):
        if label in self._labels:
            raise ValueError(f"duplicate block label {label!r}")
        self._labels.add(label)

    def nonneg(self, expr, label: str):
        """Elementwise ``expr >= 0`` for a real scalar or vector expression."""
        self._label(label)
        self._lp.append((label, _real_flat(expr)))

    def soc(self, t, vec, label: str):
        """``||vec|| <= t``; complex entries are split into real and imaginary parts."""
        self._label(label)
        t = Affine.lift(t)
        vec = Affine.lift(vec)
        flat = vec.reshape(-1)
        if np.iscomplexobj(flat.const) or any(np.iscomplexobj(c) for c in flat.terms.values()):
            parts = [flat.real, flat.imag]
        else:
            parts = [flat]
        stacked = concat([_real_flat(t)] + parts).real
        self._soc.append((label, stacked))

    def psd(self, X, label: str, force_complex: bool = False):
        """``X >= 0`` for a Hermitian affine matrix; real-valued blocks stay real."""
        self._label(label)
        X = Affine.lift(X)
        n = X.shape[0]
        if X.is_real() and not force_complex:
            S = X.real
            S = 0.5 * (S + S.H)
            self._psd.append((label, S.reshape(-1), n, 0))
        else:
            Xh = 0.5 * (X + X.H)
            re, im = Xh.real, Xh.imag
            E = bmat([[re, -im], [im, re]]).real
            self._psd.append((label, E.reshape(-1), 2 * n, n))

    def equal(self, expr, label: str):
        self._label(label)
        self._eq.append((label, _real_flat(expr)))

    def build(self, objective, sense: str = "max", meta=None) -> ConicProgram:
        nx = self._n
        obj = _real_flat(objective)
        c = np.zeros(nx)
        for i, cf in obj.terms.items():
            c[i : i + cf.shape[0]] += cf.reshape(cf.shape[0], -1).sum(axis=1)
        sign = -1.0 if sense == "max" else 1.0
        c = sign * c

        blocks = []
        rows_G, rows_h = [], []
        off = 0
        for cone, items in (("l", self._lp), ("q", self._soc), ("s", self._psd)):
            for item in items:
                label, expr = item[0], item[1]
                m = expr.shape[0]
                Gb = np.zeros((m, nx))
                for i, cf in expr.terms.items():
                    Gb[:, i : i + cf.shape[0]] = -np.real(cf).T
                rows_G.append(Gb)
                rows_h.append(np.real(expr.const).astype(float))
                if cone == "s":
                    dim, cn_ = item[2], item[3]
                else:
                    dim, cn_ = m, 0
                blocks.append(Block(cone, dim, label, off, cn_))
                off += m
        G = np.vstack(rows_G) if rows_G else np.zeros((0, nx))
        h = np.concatenate(rows_h) if rows_h else np.zeros(0)

        A_rows, b_rows = [], []
        for label, expr in self._eq:
            m = expr.shape[0]
            Ab = np.zeros((m, nx))
            for i, cf in expr.terms.items():
                Ab[:, i : i + cf.shape[0]] = np.real(cf).T
            A_rows.append(Ab)
            b_rows.append(-np.real(expr.const))
        A = np.vstack(A_rows) if A_rows else np.zeros((0, nx))
        b = np.concatenate(b_rows) if b_rows else np.zeros(0)
        return ConicProgram(
            c=c,
            G=G,
            h=h,
            A=A,
            b=b,
            blocks=tuple(blocks),
            variables=dict(self._vars),
            objective_sign=sign,
            meta=dict(meta or {}),
        )


def _real_flat(expr) -> Affine:
    e = Affine.lift(expr)
    vals = [e.const] + list(e.terms.values())
    if any(np.any(np.abs(np.imag(v)) > 1e-12 * max(1.0, np.max(np.abs(v)))) for v in vals if v.size):
        raise ValueError("expression has a non-negligible imaginary part")
    e = e.real
    return e.reshape(-1) if e.shape != () else e.reshape(1)


# -- text serialisation ------------------------------------------------------

_FMT = "{:.17g}"


def dumps(prog: ConicProgram) -> str:
    """Text form: header lines, then one line per cone block.

    Block lines read ``<cone> <dim> <label> complex=<n> h <r:v ...> G <r,c:v ...>``
    with row indices local to the block and only non-zeros listed.
    """
    out = io.StringIO()
    out.write("conic-program 1\n")
    out.write(f"nvars {prog.n_vars} sign {_FMT.format(prog.objective_sign)}\n")
    for v in prog.variables.values():
        out.write(f"var {v.name} {v.kind} {v.offset} {v.n}\n")
    out.write("c " + " ".join(f"{i}:{_FMT.format(x)}" for i, x in enumerate(prog.c) if x != 0) + "\n")
    for blk in prog.blocks:
        sl = prog.block_slice(blk)
        hb, Gb = prog.h[sl], prog.G[sl]
        hs = " ".join(f"{r}:{_FMT.format(x)}" for r, x in enumerate(hb) if x != 0)
        rr, cc = np.nonzero(Gb)
        gs = " ".join(f"{r},{c}:{_FMT.format(Gb[r, c])}" for r, c in zip(rr, cc))
        out.write(f"{blk.cone} {blk.dim} {blk.label} complex={blk.complex_n} h {hs} G {gs}\n".replace("  ", " "))
    for r in range(prog.A.shape[0]):
        (nz,) = np.nonzero(prog.A[r])
        out.write(
            f"eq {_FMT.format(prog.b[r])} "
            + " ".join(f"{c}:{_FMT.format(prog.A[r, c])}" for c in nz)
            + "\n"
        )
    return out.getvalue()


def loads(text: str) -> ConicProgram:
    lines = [ln.rstrip("\n") for ln in text.splitlines() if ln.strip()]
    if not lines or lines[0].split() != ["conic-program", "1"]:
        raise ValueError("not a conic-program v1 text")
    _, nv, _, sign = lines[1].split()
    nx = int(nv)
    variables = {}
    c = np.zeros(nx)
    blocks, Gs, hs = [], [], []
    A_rows, b_vals = [], []
    off = 0
    for ln in lines[2:]:
        tok = ln.split()
        if tok[0] == "var":
            variables[tok[1]] = VarInfo(tok[1], tok[2], int(tok[3]), int(tok[4]))
        elif tok[0] == "c":
            for t in tok[1:]:
                i, v = t.split(":")
                c[int(i)] = float(v)
        elif tok[0] in ("l", "q", "s"):
            cone, dim, label = tok[0], int(tok[1]), tok[2]
            cplx = int(tok[3].split("=")[1])
            blk = Block(cone, dim, label, off, cplx)
            m = blk.rows
            hb, Gb = np.zeros(m), np.zeros((m, nx))
            k = tok.index("h") + 1
            gpos = tok.index("G")
            for t in tok[k:gpos]:
                r, v = t.split(":")
                hb[int(r)] = float(v)
            for t in tok[gpos + 1 :]:
                rc, v = t.split(":")
                r, cc = rc.split(",")
                Gb[int(r), int(cc)] = float(v)
            blocks.append(blk)
            Gs.append(Gb)
            hs.append(hb)
            off += m
        elif tok[0] == "eq":
            row = np.zeros(nx)
            for t in tok[2:]:
                i, v = t.split(":")
                row[int(i)] = float(v)
            A_rows.append(row)
            b_vals.append(float(tok[1]))
        else:
            raise ValueError(f"unrecognised line: {ln[:40]!r}")
    return ConicProgram(
        c=c,
        G=np.vstack(Gs) if Gs else np.zeros((0, nx)),
        h=np.concatenate(hs) if hs else np.zeros(0),
        A=np.vstack(A_rows) if A_rows else np.zeros((0, nx)),
        b=np.array(b_vals),
        blocks=tuple(blocks),
        variables=variables,
        objective_sign=float(sign),
    )


@dataclass(frozen=True)
class ProgramStats:
    n_vars: int
    n_lp: int
    soc_dims: tuple
    psd_dims: tuple
    n_equalities: int
    nnz_G: int

    def psd_count(self, dim: int) -> int:
        return sum(1 for d in self.psd_dims if d == dim)


def program_stats(prog: ConicProgram) -> ProgramStats:
    d = prog.dims
    return ProgramStats(
        n_vars=prog.n_vars,
        n_lp=d["l"],
        soc_dims=tuple(d["q"]),
        psd_dims=tuple(d["s"]),
        n_equalities=prog.A.shape[0],
        nnz_G=int(np.count_nonzero(prog.G)),
    )
