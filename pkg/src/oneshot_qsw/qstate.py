"""Register-aware dense states and operators.

Every state carries a :class:`RegisterSystem`, an ordered list of named
registers. Operations address registers by name, permute tensor factors
internally and return results in a documented canonical order.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ContractViolation, NameClash, ShapeError
from .linalg import (
    eigh_clipped,
    hermitize,
    is_hermitian,
    psd_sqrt,
    support_mask,
    ZERO_BAND,
)

NORM_TOL = 1e-10
ISOMETRY_TOL = 1e-9


# ---------------------------------------------------------------------------
# register bookkeeping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegisterSystem:
    """Ordered collection of named registers.

    Parameters
    ----------
    registers : sequence of (name, dim)
        Names must be unique and dims positive. A register of dimension 1 is
        a legitimate trivial register.
    """

    registers: tuple = ()

    def __post_init__(self):
        regs = tuple((str(n), int(d)) for n, d in self.registers)
        names = [n for n, _ in regs]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise NameClash(f"duplicate register names {dup}")
        for n, d in regs:
            if d < 1:
                raise ShapeError(f"register {n!r} has dimension {d}")
        object.__setattr__(self, "registers", regs)

    @classmethod
    def of(cls, *pairs, **dims) -> "RegisterSystem":
        """Build from ``("R", 2), ("M", 2)`` pairs or keyword dims (keyword order kept)."""
        return cls(tuple(pairs) + tuple(dims.items()))

    @property
    def names(self) -> tuple:
        return tuple(n for n, _ in self.registers)

    @property
    def dims(self) -> tuple:
        return tuple(d for _, d in self.registers)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64)) if self.registers else 1

    def __len__(self):
        return len(self.registers)

    def __contains__(self, name):
        return name in self.names

    def index(self, name) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise NameClash(f"unknown register {name!r}; have {list(self.names)}") from None

    def dim_of(self, name) -> int:
        return self.registers[self.index(name)][1]

    def dims_of(self, names) -> tuple:
        return tuple(self.dim_of(n) for n in names)

    def sub(self, names) -> "RegisterSystem":
        """Subsystem on ``names`` kept in this system's declaration order."""
        names = list(names)
        for n in names:
            self.index(n)
        keep = set(names)
        return RegisterSystem(tuple(r for r in self.registers if r[0] in keep))

    def ordered(self, names) -> "RegisterSystem":
        """Subsystem on ``names`` in the order given."""
        return RegisterSystem(tuple((n, self.dim_of(n)) for n in names))

    def without(self, names) -> "RegisterSystem":
        drop = set(names)
        for n in drop:
            self.index(n)
        return RegisterSystem(tuple(r for r in self.registers if r[0] not in drop))

    def __add__(self, other: "RegisterSystem") -> "RegisterSystem":
        return RegisterSystem(self.registers + other.registers)

    def renamed(self, mapping: Mapping[str, str]) -> "RegisterSystem":
        for n in mapping:
            self.index(n)
        return RegisterSystem(tuple((mapping.get(n, n), d) for n, d in self.registers))

    def to_json(self):
        return [{"name": n, "dim": d} for n, d in self.registers]


def as_system(obj) -> RegisterSystem:
    if isinstance(obj, RegisterSystem):
        return obj
    if isinstance(obj, Mapping):
        return RegisterSystem(tuple(obj.items()))
    return RegisterSystem(tuple(obj))


# ---------------------------------------------------------------------------
# states and operators
# ---------------------------------------------------------------------------


def _frozen(a, dtype=complex):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


class Ket:
    """Unit vector tagged with a register system.

    Parameters
    ----------
    system : RegisterSystem
    amplitudes : array_like
        Vector of length ``system.dim`` (a tensor of shape ``system.dims`` is
        flattened in row-major order).
    normalized : bool, default True
        Check the unit-norm invariant. Intermediate sub-normalized vectors
        (projections, adjoint maps) pass ``normalized=False``.
    """

    __slots__ = ("system", "vector")

    def __init__(self, system, amplitudes, *, normalized=True):
        system = as_system(system)
        vec = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if vec.size != system.dim:
            raise ShapeError(f"amplitude length {vec.size} != system dimension {system.dim}")
        if normalized:
            nrm = np.linalg.norm(vec)
            if abs(nrm - 1.0) > NORM_TOL:
                raise ContractViolation(f"ket norm {nrm!r} differs from 1")
        self.system = system
        self.vector = _frozen(vec)

    @property
    def kind(self):
        return "pure"

    @property
    def tensor(self):
        return self.vector.reshape(self.system.dims)

    def norm(self) -> float:
        return float(np.linalg.norm(self.vector))

    def normalized(self) -> "Ket":
        nrm = self.norm()
        if nrm == 0:
            raise ContractViolation("cannot normalize the zero vector")
        return Ket(self.system, self.vector / nrm)

    def dm(self) -> "DensityOperator":
        return DensityOperator(self.system, np.outer(self.vector, self.vector.conj()), check=False)

    def renamed(self, mapping) -> "Ket":
        return Ket(self.system.renamed(mapping), self.vector, normalized=False)

    def __repr__(self):
        return f"Ket({list(self.system.registers)})"


class DensityOperator:
    """Hermitian PSD matrix tagged with a register system.

    Parameters
    ----------
    system : RegisterSystem
    matrix : array_like
        Square matrix of size ``system.dim``.
    check : bool, default True
        Validate Hermiticity, positivity and unit trace. Sub-normalized or
        merely PSD operators pass ``check=False``.
    """

    __slots__ = ("system", "matrix")

    def __init__(self, system, matrix, *, check=True):
        system = as_system(system)
        m = np.asarray(matrix, dtype=complex)
        d = system.dim
        if m.shape != (d, d):
            raise ShapeError(f"matrix shape {m.shape} != ({d}, {d})")
        if check:
            if not is_hermitian(m, 1e-10):
                raise ShapeError("density operator is not Hermitian")
            m = hermitize(m)
            w = np.linalg.eigvalsh(m)
            if w.size and w[0] < -1e-10:
                raise ContractViolation(f"density operator has eigenvalue {w[0]!r}")
            tr = float(np.real(np.trace(m)))
            if abs(tr - 1.0) > 1e-10:
                raise ContractViolation(f"density operator trace {tr!r} differs from 1")
        else:
            m = hermitize(m)
        self.system = system
        self.matrix = _frozen(m)

    @property
    def kind(self):
        return "mixed"

    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def normalized(self) -> "DensityOperator":
        tr = self.trace()
        if tr <= 0:
            raise ContractViolation("cannot normalize an operator with non-positive trace")
        return DensityOperator(self.system, self.matrix / tr, check=False)

    def eigvals(self):
        return eigh_clipped(self.matrix)[0]

    def renamed(self, mapping) -> "DensityOperator":
        return DensityOperator(self.system.renamed(mapping), self.matrix, check=False)

    def __repr__(self):
        return f"DensityOperator({list(self.system.registers)})"


class TestOperator:
    """Operator ``0 <= Pi <= I`` used as a hypothesis test or projector."""

    __slots__ = ("system", "matrix")
    __test__ = False  # keep pytest from collecting this class

    def __init__(self, system, matrix, *, check=True):
        system = as_system(system)
        m = np.asarray(matrix, dtype=complex)
        d = system.dim
        if m.shape != (d, d):
            raise ShapeError(f"matrix shape {m.shape} != ({d}, {d})")
        if check and not is_hermitian(m, 1e-9):
            raise ShapeError("test operator is not Hermitian")
        m = hermitize(m)
        if check and m.size:
            w = np.linalg.eigvalsh(m)
            if w[0] < -1e-9 or w[-1] > 1 + 1e-9:
                raise ContractViolation(f"test spectrum [{w[0]!r}, {w[-1]!r}] not inside [0, 1]")
        self.system = system
        self.matrix = _frozen(m)

    def renamed(self, mapping) -> "TestOperator":
        return TestOperator(self.system.renamed(mapping), self.matrix, check=False)

    def expectation(self, state) -> float:
        return expectation(self.matrix, state)

    def __repr__(self):
        return f"TestOperator({list(self.system.registers)})"


class LinearMapOnRegisters:
    """Linear map between register lists.

    Parameters
    ----------
    domain, codomain : sequence of (name, dim)
    matrix : array_like
        Shape ``(prod codomain dims, prod domain dims)``.
    """

    __slots__ = ("domain", "codomain", "matrix", "_iso")

    def __init__(self, domain, codomain, matrix):
        self.domain = as_system(domain)
        self.codomain = as_system(codomain)
        m = np.asarray(matrix, dtype=complex)
        if m.shape != (self.codomain.dim, self.domain.dim):
            raise ShapeError(
                f"map matrix shape {m.shape} != ({self.codomain.dim}, {self.domain.dim})"
            )
        self.matrix = _frozen(m)
        self._iso = None

    def isometry_defect(self) -> float:
        m = self.matrix
        return float(np.max(np.abs(m.conj().T @ m - np.eye(m.shape[1])), initial=0.0))

    @property
    def is_isometry(self) -> bool:
        if self._iso is None:
            self._iso = self.isometry_defect() <= ISOMETRY_TOL
        return self._iso

    @property
    def is_unitary(self) -> bool:
        m = self.matrix
        return (
            m.shape[0] == m.shape[1]
            and self.is_isometry
            and float(np.max(np.abs(m @ m.conj().T - np.eye(m.shape[0])), initial=0.0)) <= ISOMETRY_TOL
        )

    def adjoint(self) -> "LinearMapOnRegisters":
        return LinearMapOnRegisters(self.codomain, self.domain, self.matrix.conj().T)

    def renamed(self, mapping) -> "LinearMapOnRegisters":
        dmap = {k: v for k, v in mapping.items() if k in self.domain}
        cmap = {k: v for k, v in mapping.items() if k in self.codomain}
        return LinearMapOnRegisters(
            self.domain.renamed(dmap), self.codomain.renamed(cmap), self.matrix
        )

    def __repr__(self):
        return f"LinearMapOnRegisters({list(self.domain.names)} -> {list(self.codomain.names)})"


# ---------------------------------------------------------------------------
# construction helpers
# ---------------------------------------------------------------------------


def basis_ket(system, index) -> Ket:
    """Computational basis vector; ``index`` is flat or one entry per register."""
    system = as_system(system)
    v = np.zeros(system.dim, dtype=complex)
    if np.ndim(index) == 0:
        flat = int(index)
    else:
        flat = int(np.ravel_multi_index(tuple(int(i) for i in index), system.dims))
    v[flat] = 1.0
    return Ket(system, v)


def maximally_mixed(system) -> DensityOperator:
    system = as_system(system)
    return DensityOperator(system, np.eye(system.dim) / system.dim)


def maximally_entangled(name_a, name_b, dim) -> Ket:
    v = np.eye(dim, dtype=complex).reshape(-1) / np.sqrt(dim)
    return Ket(RegisterSystem(((name_a, dim), (name_b, dim))), v)


def ghz(names=("R", "M", "N"), dim=2) -> Ket:
    system = RegisterSystem(tuple((n, dim) for n in names))
    v = np.zeros(system.dim, dtype=complex)
    for i in range(dim):
        v[np.ravel_multi_index((i,) * len(names), system.dims)] = 1.0
    return Ket(system, v / np.sqrt(dim))


def density(state) -> DensityOperator:
    """Density operator of a Ket (pass-through for mixed states)."""
    if isinstance(state, Ket):
        return state.dm()
    if isinstance(state, DensityOperator):
        return state
    raise TypeError(f"expected Ket or DensityOperator, got {type(state).__name__}")


def matrix_of(obj) -> np.ndarray:
    """Dense matrix behind a state, test, or raw array."""
    if isinstance(obj, Ket):
        return np.outer(obj.vector, obj.vector.conj())
    if isinstance(obj, (DensityOperator, TestOperator)):
        return np.asarray(obj.matrix)
    return np.asarray(obj, dtype=complex)


def expectation(op, state) -> float:
    """``Tr(op state)`` for a Ket or density operator."""
    op = np.asarray(op)
    if isinstance(state, Ket):
        v = state.vector
        return float(np.real(v.conj() @ (op @ v)))
    return float(np.real(np.trace(op @ matrix_of(state))))


# ---------------------------------------------------------------------------
# permutations, tensor products, partial traces
# ---------------------------------------------------------------------------


def _perm_to(system: RegisterSystem, order) -> list:
    order = list(order)
    if sorted(order) != sorted(system.names):
        raise NameClash(f"order {order} is not a permutation of {list(system.names)}")
    return [system.index(n) for n in order]


def reorder(state, order):
    """Return the same state with registers permuted into ``order``."""
    order = list(order)
    perm = _perm_to(state.system, order)
    new_sys = state.system.ordered(order)
    if perm == list(range(len(perm))):
        return state
    dims = state.system.dims
    if isinstance(state, Ket):
        t = state.vector.reshape(dims).transpose(perm)
        return Ket(new_sys, t.reshape(-1), normalized=False)
    k = len(dims)
    t = np.asarray(state.matrix).reshape(dims + dims).transpose(perm + [p + k for p in perm])
    m = t.reshape(new_sys.dim, new_sys.dim)
    if isinstance(state, TestOperator):
        return TestOperator(new_sys, m, check=False)
    return DensityOperator(new_sys, m, check=False)


def permute_matrix(matrix, system: RegisterSystem, order) -> np.ndarray:
    """Raw operator matrix permuted from ``system`` order into ``order``."""
    perm = _perm_to(system, order)
    dims = system.dims
    k = len(dims)
    t = np.asarray(matrix).reshape(dims + dims).transpose(perm + [p + k for p in perm])
    d = system.dim
    return t.reshape(d, d)


def tensor(*states):
    """Kronecker product in argument order.

    All Kets give a Ket. Mixing Kets and density operators gives a density
    operator. Register names must be disjoint.
    """
    if len(states) == 1 and isinstance(states[0], (list, tuple)):
        states = tuple(states[0])
    if not states:
        raise ShapeError("tensor needs at least one factor")
    system = RegisterSystem(())
    for s in states:
        system = system + s.system  # raises NameClash on duplicates
    if all(isinstance(s, Ket) for s in states):
        v = np.ones(1, dtype=complex)
        for s in states:
            v = np.kron(v, s.vector)
        return Ket(system, v, normalized=False)
    if all(isinstance(s, TestOperator) for s in states):
        m = np.ones((1, 1), dtype=complex)
        for s in states:
            m = np.kron(m, s.matrix)
        return TestOperator(system, m, check=False)
    m = np.ones((1, 1), dtype=complex)
    for s in states:
        m = np.kron(m, matrix_of(s))
    return DensityOperator(system, m, check=False)


def tensor_in_order(states, order):
    """Tensor product permuted into the register order ``order``."""
    return reorder(tensor(*states), order)


def partial_trace(state, keep) -> DensityOperator:
    """Marginal on the registers in ``keep`` (declaration order preserved).

    Accepts a Ket directly, which avoids forming the full density matrix.
    """
    system = state.system
    keep_set = set(keep)
    for n in keep_set:
        system.index(n)
    kept = [n for n in system.names if n in keep_set]
    traced = [n for n in system.names if n not in keep_set]
    sub = system.sub(kept)
    dk = sub.dim
    dt = system.without(kept).dim
    perm = [system.index(n) for n in kept + traced]
    dims = system.dims
    if isinstance(state, Ket):
        a = state.vector.reshape(dims).transpose(perm).reshape(dk, dt)
        return DensityOperator(sub, a @ a.conj().T, check=False)
    k = len(dims)
    t = np.asarray(matrix_of(state)).reshape(dims + dims)
    t = t.transpose(perm + [p + k for p in perm]).reshape(dk, dt, dk, dt)
    return DensityOperator(sub, np.einsum("ajbj->ab", t), check=False)


def marginal(state, keep) -> DensityOperator:
    return partial_trace(state, keep)


def embed_operator(op, op_names, system: RegisterSystem) -> np.ndarray:
    """Dense matrix of ``op (x) I`` on ``system`` where ``op`` acts on ``op_names``."""
    op = np.asarray(op, dtype=complex)
    op_names = list(op_names)
    rest = [n for n in system.names if n not in set(op_names)]
    drest = system.sub(rest).dim
    big = np.kron(op, np.eye(drest))
    tmp = system.ordered(op_names + rest)
    return permute_matrix(big, tmp, list(system.names))


def merge_registers(state, groups: Mapping[str, Sequence[str]]):
    """Fuse groups of registers into single registers (row-major within a group).

    The merged register takes the position of the group's first member in the
    output order given by the groups' insertion order followed by leftovers.
    """
    order = []
    new_regs = []
    used = set()
    for new, members in groups.items():
        members = list(members)
        order.extend(members)
        used.update(members)
        new_regs.append((new, int(np.prod(state.system.dims_of(members), dtype=np.int64))))
    rest = [n for n in state.system.names if n not in used]
    order.extend(rest)
    new_regs.extend((n, state.system.dim_of(n)) for n in rest)
    s = reorder(state, order)
    sys_new = RegisterSystem(tuple(new_regs))
    if isinstance(s, Ket):
        return Ket(sys_new, s.vector, normalized=False)
    if isinstance(s, TestOperator):
        return TestOperator(sys_new, s.matrix, check=False)
    return DensityOperator(sys_new, s.matrix, check=False)


def tensor_power(state, n, suffix="_{}"):
    """``n`` copies with registers renamed ``name + suffix.format(t)`` for t = 1..n."""
    parts = [state.renamed({nm: nm + suffix.format(t) for nm in state.system.names}) for t in range(1, n + 1)]
    return tensor(*parts)


# ---------------------------------------------------------------------------
# purification, fidelity
# ---------------------------------------------------------------------------


def purify(rho, purifier_name="E") -> Ket:
    """Spectral purification ``sum_i sqrt(l_i) |e_i> |i>`` with purifier dimension ``rank(rho)``."""
    rho = density(rho)
    if purifier_name in rho.system:
        raise NameClash(f"purifier name {purifier_name!r} already used")
    w, v = eigh_clipped(rho.matrix)
    mask = support_mask(w)
    w, v = w[mask][::-1], v[:, mask][:, ::-1]
    r = max(int(mask.sum()), 1)
    if not mask.any():
        raise ContractViolation("cannot purify the zero operator")
    amp = (v * np.sqrt(w)).reshape(rho.system.dim, r)
    system = rho.system + RegisterSystem(((purifier_name, r),))
    vec = amp.reshape(-1)
    return Ket(system, vec / np.linalg.norm(vec))


def _same_layout(a, b):
    if a.system.names != b.system.names:
        if sorted(a.system.names) != sorted(b.system.names):
            raise ShapeError(
                f"states live on different systems {list(a.system.names)} vs {list(b.system.names)}"
            )
        b = reorder(b, a.system.names)
    if a.system.dims != b.system.dims:
        raise ShapeError(f"dimension mismatch {a.system.dims} vs {b.system.dims}")
    return a, b


def fidelity(rho, sigma) -> float:
    """Fidelity ``||sqrt(rho) sqrt(sigma)||_1`` (pure inputs use overlaps directly)."""
    rho, sigma = _same_layout(rho, sigma)
    if isinstance(rho, Ket) and isinstance(sigma, Ket):
        return float(min(1.0, abs(np.vdot(rho.vector, sigma.vector))))
    if isinstance(rho, Ket) or isinstance(sigma, Ket):
        ket, mix = (rho, sigma) if isinstance(rho, Ket) else (sigma, rho)
        val = max(expectation(mix.matrix, ket), 0.0)
        return float(min(1.0, np.sqrt(val)))
    # F = Tr sqrt(sqrt(rho) sigma sqrt(rho)); eigenvalues at rounding level are
    # zeroed before the square root, where they would otherwise grow to ~1e-8
    w, v = eigh_clipped(rho.matrix)
    x = v * np.sqrt(np.clip(w, 0.0, None))
    ev = np.linalg.eigvalsh(hermitize(x.conj().T @ sigma.matrix @ x))
    floor = 1e-14 * max(1.0, float(ev[-1]) if ev.size else 0.0)
    f = float(np.sum(np.sqrt(ev[ev > floor])))
    return min(1.0, f)


def _bures_sq(rho, sigma) -> float:
    """``2 - 2F`` as a sum of squared differences of aligned square-root factors.

    Unlike ``1 - F`` this does not cancel, so nearly equal states keep their
    small distance instead of rounding noise of order ``1e-8``.
    """
    if isinstance(rho, Ket) and isinstance(sigma, Ket):
        ov = np.vdot(sigma.vector, rho.vector)
        phase = ov / abs(ov) if abs(ov) > 0 else 1.0
        return float(np.sum(np.abs(rho.vector - phase * sigma.vector) ** 2))
    a, b = (s.dm() if isinstance(s, Ket) else s for s in (rho, sigma))
    wa, va = eigh_clipped(a.matrix)
    wb, vb = eigh_clipped(b.matrix)
    xa = va * np.sqrt(np.clip(wa, 0.0, None))
    xb = vb * np.sqrt(np.clip(wb, 0.0, None))
    u, _, vh = np.linalg.svd(xb.conj().T @ xa)
    return float(np.sum(np.abs(xa - xb @ (u @ vh)) ** 2))


def fidelity_pd(rho, sigma):
    """Fidelity and purified distance ``(F, sqrt(1 - F^2))``.

    Near ``F = 1`` the distance comes from the Bures form
    ``1 - F^2 = B^2 (1 - B^2/4)`` with ``B^2 = 2 - 2F``.
    """
    f = fidelity(rho, sigma)
    if 1.0 - f > 1e-6:
        return f, float(np.sqrt(max(0.0, 1.0 - f * f)))
    rho, sigma = _same_layout(rho, sigma)
    b2 = min(_bures_sq(rho, sigma), 2.0)
    return f, float(np.sqrt(max(0.0, b2 * (1.0 - b2 / 4.0))))


def purified_distance(rho, sigma) -> float:
    return fidelity_pd(rho, sigma)[1]


# ---------------------------------------------------------------------------
# applying maps to subsystems
# ---------------------------------------------------------------------------


def _output_order(system: RegisterSystem, lmap: LinearMapOnRegisters):
    dom = set(lmap.domain.names)
    cod = list(lmap.codomain.names)
    cod_set = set(cod)
    out = []
    for n in system.names:
        if n not in dom or n in cod_set:
            out.append(n)
    out.extend(n for n in cod if n not in dom)
    return out


def apply_on(state, lmap: LinearMapOnRegisters, *, require_isometry=False):
    """Apply ``lmap`` to the registers it names, identity elsewhere.

    The output keeps the untouched registers in place. A codomain register
    that shares its name with a domain register takes that register's slot.
    New codomain registers are appended in codomain order.

    Parameters
    ----------
    state : Ket or DensityOperator
    lmap : LinearMapOnRegisters
    require_isometry : bool
        Raise :class:`ContractViolation` unless ``lmap`` is an isometry.
    """
    if require_isometry and not lmap.is_isometry:
        raise ContractViolation(f"{lmap!r} is not an isometry (defect {lmap.isometry_defect():.3g})")
    system = state.system
    dom_names = list(lmap.domain.names)
    for n in dom_names:
        if n not in system:
            raise ShapeError(f"map domain register {n!r} not in state system {list(system.names)}")
        if system.dim_of(n) != lmap.domain.dim_of(n):
            raise ShapeError(f"register {n!r} has dim {system.dim_of(n)}, map expects {lmap.domain.dim_of(n)}")
    untouched = [n for n in system.names if n not in set(dom_names)]
    clash = set(untouched) & set(lmap.codomain.names)
    if clash:
        raise NameClash(f"codomain registers {sorted(clash)} collide with untouched registers")

    cod = list(lmap.codomain.names)
    cdims = lmap.codomain.dims
    ddims = lmap.domain.dims
    mt = lmap.matrix.reshape(cdims + ddims)
    nc, nd = len(cdims), len(ddims)
    axes = [system.index(n) for n in dom_names]
    out_order = _output_order(system, lmap)
    inter = RegisterSystem(
        tuple((n, lmap.codomain.dim_of(n)) for n in cod) + tuple((n, system.dim_of(n)) for n in untouched)
    )
    dims = system.dims
    if isinstance(state, Ket):
        t = state.vector.reshape(dims)
        r = np.tensordot(mt, t, axes=(list(range(nc, nc + nd)), axes))
        out = Ket(inter, r.reshape(-1), normalized=False)
        return reorder(out, out_order)
    k = len(dims)
    t = np.asarray(matrix_of(state)).reshape(dims + dims)
    # rows: result axes = cod + untouched_rows + all column axes
    r = np.tensordot(mt, t, axes=(list(range(nc, nc + nd)), axes))
    ncols_axes_start = nc + (k - nd)
    col_axes = [ncols_axes_start + a for a in axes]
    r = np.tensordot(r, mt.conj(), axes=(col_axes, list(range(nc, nc + nd))))
    # remaining order: cod_rows, untouched_rows, untouched_cols, cod_cols
    nu = k - nd
    perm = list(range(nc + nu)) + list(range(nc + 2 * nu, nc + 2 * nu + nc)) + list(range(nc + nu, nc + 2 * nu))
    r = r.transpose(perm)
    d = inter.dim
    cls = TestOperator if isinstance(state, TestOperator) else DensityOperator
    out = cls(inter, r.reshape(d, d), check=False)
    return reorder(out, out_order)


def apply_controlled(state: Ket, controls, branches, *, adjoint=False) -> Ket:
    """Apply a map selected by the values of control registers.

    Parameters
    ----------
    state : Ket
    controls : list of str
        Control register names (left untouched).
    branches : callable or dict
        ``branches(values)`` or ``branches[values]`` gives the
        :class:`LinearMapOnRegisters` for a tuple of control values, or
        ``None`` for identity. Every branch must produce the same output
        system.
    adjoint : bool
        Apply the adjoint of every branch instead.
    """
    controls = list(controls)
    system = state.system
    cdims = system.dims_of(controls)
    rest = [n for n in system.names if n not in set(controls)]
    t = reorder(state, controls + rest).vector.reshape(cdims + (-1,))
    rest_sys = system.sub(rest).ordered(rest)
    get = branches if callable(branches) else branches.get
    outs = {}
    out_sys = None
    for vals in np.ndindex(*cdims):
        sub = Ket(rest_sys, t[vals], normalized=False)
        m = get(tuple(int(v) for v in vals))
        if m is not None:
            if adjoint:
                m = m.adjoint()
            sub = apply_on(sub, m)
        if out_sys is None:
            out_sys = sub.system
        elif sub.system.names != out_sys.names:
            sub = reorder(sub, out_sys.names)
        if sub.system.dims != out_sys.dims:
            raise ShapeError("controlled branches produce different output systems")
        outs[vals] = sub.vector
    stacked = np.stack([outs[v] for v in np.ndindex(*cdims)]).reshape(-1)
    full = system.ordered(controls) + out_sys
    res = Ket(full, stacked, normalized=False)
    # surviving registers keep their original order; new ones go last
    names = set(full.names)
    order = [n for n in system.names if n in names]
    order += [n for n in out_sys.names if n not in system]
    return reorder(res, order)


# ---------------------------------------------------------------------------
# spectral parts, Uhlmann
# ---------------------------------------------------------------------------


def pos_neg_parts(op, system=None):
    """Projectors onto the non-negative and negative eigenspaces of a Hermitian operator.

    Eigenvalues in ``[-1e-10, 0)`` count as zero and go to the non-negative part.

    Returns
    -------
    (TestOperator, TestOperator)
    """
    if system is None:
        system = getattr(op, "system", None)
    m = matrix_of(op)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ShapeError("operator must be square")
    if not is_hermitian(m, 1e-9):
        raise ShapeError("operator is not Hermitian")
    if system is None:
        system = RegisterSystem((("X", m.shape[0]),))
    w, v = np.linalg.eigh(hermitize(m))
    plus = w >= -ZERO_BAND
    vp, vn = v[:, plus], v[:, ~plus]
    return (
        TestOperator(system, vp @ vp.conj().T, check=False),
        TestOperator(system, vn @ vn.conj().T, check=False),
    )


def _split_common(rho_pure: Ket, sigma_pure: Ket):
    common = [n for n in rho_pure.system.names if n in sigma_pure.system]
    b_names = [n for n in rho_pure.system.names if n not in set(common)]
    c_names = [n for n in sigma_pure.system.names if n not in set(common)]
    for n in common:
        if rho_pure.system.dim_of(n) != sigma_pure.system.dim_of(n):
            raise ShapeError(f"shared register {n!r} has different dimensions")
    return common, b_names, c_names


def marginal_fidelity(a: Ket, b: Ket, names) -> float:
    """``F(a_X, b_X)`` on the registers ``names`` from the amplitudes.

    The nuclear norm of the overlap of the two purifications avoids the
    square roots of rounding-level eigenvalues that the mixed-state formula
    takes on rank-deficient marginals.
    """
    names = list(names)
    da = a.system.sub(names).dim
    for n in names:
        if a.system.dim_of(n) != b.system.dim_of(n):
            raise ShapeError(f"register {n!r} has different dimensions")
    rest_a = [n for n in a.system.names if n not in set(names)]
    rest_b = [n for n in b.system.names if n not in set(names)]
    P = reorder(a, names + rest_a).vector.reshape(da, -1)
    S = reorder(b, names + rest_b).vector.reshape(da, -1)
    return min(1.0, float(np.linalg.svd(P.conj().T @ S, compute_uv=False).sum()))


def uhlmann_isometry(rho_pure: Ket, sigma_pure: Ket) -> LinearMapOnRegisters:
    """Isometry ``V: C -> B`` maximizing ``|<rho| (I_A (x) V) |sigma>|``.

    ``A`` is the set of registers shared by the two kets; ``B`` are the other
    registers of ``rho_pure`` and ``C`` those of ``sigma_pure``. The maximum
    equals ``F(rho_A, sigma_A)``.
    """
    common, b_names, c_names = _split_common(rho_pure, sigma_pure)
    rs = rho_pure.system
    ss = sigma_pure.system
    da = rs.sub(common).dim
    db = rs.sub(b_names).ordered(b_names).dim
    dc = ss.sub(c_names).ordered(c_names).dim
    P = reorder(rho_pure, common + b_names).vector.reshape(da, db)
    S = reorder(sigma_pure, common + c_names).vector.reshape(da, dc)
    Y = P.conj().T @ S  # db x dc
    U, s, Wh = np.linalg.svd(Y, full_matrices=True)
    smax = s[0] if s.size else 0.0
    r = int(np.sum(s > max(smax, 1e-300) * 1e-12)) if smax > 0 else 0
    W = Wh.conj().T
    V = np.conj(U[:, :r] @ W[:, :r].conj().T)  # db x dc
    # complete on the support of sigma_C
    sig_c = S.T @ S.conj()
    wc, vc = eigh_clipped(sig_c)
    supp = vc[:, support_mask(wc)]
    used = np.conj(W[:, :r])  # domain directions already mapped
    if used.shape[1]:
        resid = supp - used @ (used.conj().T @ supp)
    else:
        resid = supp
    need = np.zeros((dc, 0), dtype=complex)
    if resid.size:
        q, sv, _ = np.linalg.svd(resid, full_matrices=False)
        need = q[:, sv > 1e-8]
    if dc <= db:
        # full isometry on C
        if used.shape[1]:
            comp = np.eye(dc) - used @ used.conj().T
        else:
            comp = np.eye(dc)
        wq, vq = np.linalg.eigh(hermitize(comp))
        need = vq[:, wq > 0.5]
    k = need.shape[1]
    if k:
        target_used = np.conj(U[:, :r])
        if target_used.shape[1]:
            compb = np.eye(db) - target_used @ target_used.conj().T
        else:
            compb = np.eye(db)
        wb, vb = np.linalg.eigh(hermitize(compb))
        free = vb[:, wb > 0.5]
        if free.shape[1] < k:
            raise ShapeError(
                f"target purifier dimension {db} too small to carry the support (need {r + k})"
            )
        V = V + free[:, :k] @ need.conj().T
    dom = ss.ordered(c_names)
    cod = rs.ordered(b_names)
    return LinearMapOnRegisters(dom, cod, V)


# ---------------------------------------------------------------------------
# random instances
# ---------------------------------------------------------------------------

RANDOM_KINDS = ("haar_pure", "mixed_by_tracing", "classical_diag", "near_product")


def _haar_vector(rng, d):
    v = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return v / np.linalg.norm(v)


def _parse_kind(kind, t):
    kind = str(kind)
    if kind.startswith("near_product(") and kind.endswith(")"):
        t = float(kind[len("near_product("):-1])
        kind = "near_product"
    if kind not in RANDOM_KINDS:
        raise ValueError(f"unknown random state kind {kind!r}; choose from {RANDOM_KINDS}")
    return kind, t


def random_state(system, seed, kind="haar_pure", t=0.0, *, pure=None, env_dim=None):
    """Seeded random instance.

    Parameters
    ----------
    system : RegisterSystem or sequence of (name, dim)
    seed : int
    kind : {"haar_pure", "mixed_by_tracing", "classical_diag", "near_product"}
        ``"near_product(0.05)"`` is accepted as shorthand for ``t=0.05``.
    t : float
        Correlation weight for ``near_product``.
    pure : bool, optional
        For ``near_product`` only: return a Ket mixing a product of Haar kets
        with a correlated Haar ket. Default is a density operator mixing the
        product of marginals with the correlated state.
    env_dim : int, optional
        Environment dimension for ``mixed_by_tracing`` (default: system dim).

    Returns
    -------
    Ket or DensityOperator
    """
    system = as_system(system)
    kind, t = _parse_kind(kind, t)
    rng = np.random.default_rng(int(seed))
    d = system.dim
    if kind == "haar_pure":
        return Ket(system, _haar_vector(rng, d))
    if kind == "mixed_by_tracing":
        e = int(env_dim or d)
        g = (rng.standard_normal((d, e)) + 1j * rng.standard_normal((d, e)))
        m = g @ g.conj().T
        return DensityOperator(system, m / np.real(np.trace(m)), check=False)
    if kind == "classical_diag":
        p = rng.dirichlet(np.ones(d))
        return DensityOperator(system, np.diag(p).astype(complex), check=False)
    # near_product
    if pure:
        prod = np.ones(1, dtype=complex)
        for dd in system.dims:
            prod = np.kron(prod, _haar_vector(rng, dd))
        corr = _haar_vector(rng, d)
        v = (1.0 - t) * prod + t * corr
        return Ket(system, v / np.linalg.norm(v))
    seed_state = random_state(system, int(rng.integers(2**31)), "mixed_by_tracing")
    margs = [partial_trace(seed_state, [n]) for n in system.names]
    prod = tensor(*margs).matrix
    m = (1.0 - t) * prod + t * seed_state.matrix
    return DensityOperator(system, m / np.real(np.trace(m)), check=False)


def random_unitary(d, rng):
    """Haar unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    ph = np.diag(r) / np.abs(np.diag(r))
    return q * ph


def random_test(system, rng) -> TestOperator:
    """Random operator with spectrum in [0, 1]."""
    system = as_system(system)
    u = random_unitary(system.dim, rng)
    w = rng.uniform(0.0, 1.0, system.dim)
    return TestOperator(system, (u * w) @ u.conj().T, check=False)
