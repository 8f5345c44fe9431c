"""Exact statevector emulation of shift / permutation / QFT register circuits.

Conventions, fixed across the package:

* qubits are indexed 0..n-1 from the most significant bit of the basis index;
* a :class:`Register` is a contiguous MSB-first slice ``(first, size)``;
* a flow grid is amplitude-encoded x-major: basis index ``(i << y_bits) | j``
  holds pixel column ``i``, row ``j``;
* operators are exact linear maps on dense complex vectors (no gate
  decomposition), applied blockwise over the registers they do not address.

States are immutable; every operation returns a new vector. Projections
return the unnormalized state together with its squared norm so
post-selection probability bookkeeping stays explicit; a squared norm of
zero signals an empty projection branch and is raised as
:class:`ProjectionEmptyError` by pipeline code, not here.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

NORM_ATOL = 1e-9


class ProjectionEmptyError(ValueError):
    """Post-selection branch has zero probability."""


@dataclass(frozen=True)
class Register:
    """Contiguous qubit slice, MSB-first: qubits [first, first + size)."""

    first: int
    size: int

    def __post_init__(self):
        if self.first < 0 or self.size <= 0:
            raise ValueError(f"invalid register ({self.first}, {self.size})")


@dataclass(frozen=True)
class RegisterLayout:
    """Qubit budget of the detection circuits: flow, window, contour, low band.

    The window and contour registers are the *top* (most significant) qubits
    once the selection permutations have run; the layout only records sizes.
    """

    n_f: int = 16
    n_w: int = 10
    n_c: int = 5
    n_lfps: int = 3
    x_bits: int = -1   # -1: split n_f as evenly as possible, x first
    y_bits: int = -1

    def __post_init__(self):
        if self.x_bits < 0 and self.y_bits < 0:
            object.__setattr__(self, "x_bits", self.n_f - self.n_f // 2)
            object.__setattr__(self, "y_bits", self.n_f // 2)
        if self.x_bits + self.y_bits != self.n_f:
            raise ValueError("x_bits + y_bits must equal n_f")
        if not (self.n_f >= self.n_w > self.n_c > self.n_lfps >= 0):
            raise ValueError("layout must satisfy n_f >= n_w > n_c > n_lfps >= 0")

    @property
    def x_register(self) -> Register:
        return Register(0, self.x_bits)

    @property
    def y_register(self) -> Register:
        return Register(self.x_bits, self.y_bits)

    @property
    def flow_register(self) -> Register:
        return Register(0, self.n_f)

    @property
    def window_register(self) -> Register:
        return Register(0, self.n_w)

    @property
    def contour_register(self) -> Register:
        return Register(0, self.n_c)

    @property
    def window_side(self) -> int:
        if self.n_w % 2:
            raise ValueError("square windows need an even window register")
        return 1 << (self.n_w // 2)


@dataclass(frozen=True)
class PermutationSpec:
    """Bijective reordering of 2^n basis states.

    ``order[j]`` is the index of the state mapped *to* ``|j>``; applying the
    permutation moves the amplitude at ``order[j]`` to position ``j``.
    """

    order: np.ndarray

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64)
        object.__setattr__(self, "order", order)
        n = order.shape[0]
        if n == 0 or (n & (n - 1)):
            raise ValueError("order length must be a power of two")
        if order.min() < 0 or order.max() >= n or np.bincount(order, minlength=n).max() != 1:
            raise ValueError("order is not a bijection on [0, 2^n)")
        order.setflags(write=False)

    @property
    def dim(self) -> int:
        return int(self.order.shape[0])

    @classmethod
    def identity(cls, dim: int) -> "PermutationSpec":
        return cls(np.arange(dim))

    @classmethod
    def from_partial(cls, sources: np.ndarray, targets: np.ndarray, dim: int) -> "PermutationSpec":
        """Bijection sending ``sources[t] -> targets[t]``, completed deterministically.

        States outside the relevant subset are matched up in increasing index
        order; the completion is arbitrary but reproducible.
        """
        sources = np.asarray(sources, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.int64)
        if sources.shape != targets.shape:
            raise ValueError("sources and targets must have equal length")
        order = np.full(dim, -1, dtype=np.int64)
        order[targets] = sources
        free_targets = order < 0
        used = np.zeros(dim, dtype=bool)
        used[sources] = True
        order[free_targets] = np.flatnonzero(~used)
        return cls(order)

    def inverse(self) -> "PermutationSpec":
        inv = np.empty_like(self.order)
        inv[self.order] = np.arange(self.dim)
        return PermutationSpec(inv)


@dataclass(frozen=True)
class StateVector:
    """Dense complex amplitude vector over 2^n basis states.

    ``scale`` is the field-unit factor: multiplying the amplitudes by it
    recovers the raw (un-normalized) encoded values. Unitary operations
    carry it along unchanged.
    """

    n_qubits: int
    amplitudes: np.ndarray
    layout: RegisterLayout | None = None
    scale: float = 1.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=np.complex128)
        if amps.shape != (1 << self.n_qubits,):
            raise ValueError(
                f"amplitude vector has length {amps.shape}, expected 2^{self.n_qubits}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm_squared(self) -> float:
        return float(np.vdot(self.amplitudes, self.amplitudes).real)

    def renormalized(self) -> "StateVector":
        n = np.sqrt(self.norm_squared)
        if n == 0:
            raise ProjectionEmptyError("cannot renormalize a zero state")
        return replace(self, amplitudes=self.amplitudes / n, scale=self.scale * n)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


def _full_register(state: StateVector) -> Register:
    return Register(0, state.n_qubits)


def _as_register(state: StateVector, register) -> Register:
    if register is None:
        return _full_register(state)
    if isinstance(register, tuple):
        register = Register(*register)
    if register.first + register.size > state.n_qubits:
        raise ValueError(f"register {register} does not fit a {state.n_qubits}-qubit state")
    return register


def _register_view(state: StateVector, register: Register) -> np.ndarray:
    """Amplitudes reshaped (above, 2^size, below); axis 1 is the register."""
    pre = 1 << register.first
    mid = 1 << register.size
    post = 1 << (state.n_qubits - register.first - register.size)
    return state.amplitudes.reshape(pre, mid, post)


def encode_flow(field, layout: RegisterLayout) -> StateVector:
    """Amplitude-encode a vorticity grid, L2-normalized, zero in the padding.

    Accepts a FlowField or a bare 2D array shaped (height, width). The basis
    index of pixel (x=i, y=j) is ``(i << y_bits) | j``; grids smaller than
    2^x_bits x 2^y_bits are zero-padded (200x200 into 256x256 at n_f = 16).
    """
    grid = np.asarray(getattr(field, "vorticity", field), dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError("flow grid must be 2D")
    height, width = grid.shape
    if width > (1 << layout.x_bits) or height > (1 << layout.y_bits):
        raise ValueError(
            f"{width}x{height} grid does not fit {layout.x_bits}+{layout.y_bits}-bit layout"
        )
    norm = float(np.linalg.norm(grid))
    if norm == 0:
        raise ValueError("cannot encode an all-zero field")
    padded = np.zeros((1 << layout.x_bits, 1 << layout.y_bits))
    padded[:width, :height] = grid.T  # [i, j] = grid[j, i]
    return StateVector(layout.n_f, padded.ravel().astype(np.complex128) / norm,
                       layout=layout, scale=norm)


def apply_shift(state: StateVector, d: int, register=None) -> StateVector:
    """Cyclic shift on the addressed register: |j> -> |(j + d) mod 2^size>."""
    reg = _as_register(state, register)
    view = _register_view(state, reg)
    out = np.roll(view, int(d) % (1 << reg.size), axis=1)
    return replace(state, amplitudes=out.reshape(-1))


def apply_permutation(state: StateVector, p: PermutationSpec, register=None) -> StateVector:
    """Basis reordering: the amplitude at ``order[j]`` moves to index ``j``."""
    reg = _as_register(state, register)
    if p.dim != (1 << reg.size):
        raise ValueError(f"permutation of dim {p.dim} does not match register {reg}")
    view = _register_view(state, reg)
    out = view[:, p.order, :]
    return replace(state, amplitudes=out.reshape(-1))


def apply_qft(state: StateVector, register=None, inverse: bool = False) -> StateVector:
    """Fourier transform on the addressed register, blockwise over the rest.

    Forward convention: out[k] = (1/sqrt(N)) sum_j exp(-2*pi*i*j*k/N) in[j].
    """
    reg = _as_register(state, register)
    view = _register_view(state, reg)
    n = 1 << reg.size
    if inverse:
        out = np.fft.ifft(view, axis=1) * np.sqrt(n)
    else:
        out = np.fft.fft(view, axis=1) / np.sqrt(n)
    return replace(state, amplitudes=out.reshape(-1))


def project_low(state: StateVector, m: int, register=None) -> tuple[StateVector, float]:
    """Keep register indices < 2^m; returns (unnormalized state, squared norm).

    The squared norm of the kept part is the post-selection probability when
    the input is normalized. A zero probability marks an empty branch.
    """
    reg = _as_register(state, register)
    if m > reg.size:
        raise ValueError(f"cannot keep {m} qubits of a {reg.size}-qubit register")
    view = _register_view(state, reg).copy()
    view[:, (1 << m):, :] = 0.0
    projected = replace(state, amplitudes=view.reshape(-1))
    return projected, projected.norm_squared


def project_rank1(state: StateVector, k: int, register=None) -> tuple[np.ndarray, float]:
    """Conditional amplitude slice with the addressed register fixed at |k>.

    Returns the amplitudes over the remaining qubits (MSB order preserved)
    and the squared norm of the slice (the post-selection probability).
    """
    reg = _as_register(state, register)
    if not (0 <= k < (1 << reg.size)):
        raise ValueError(f"frequency index {k} outside register of size {reg.size}")
    slice_ = _register_view(state, reg)[:, k, :].reshape(-1).copy()
    prob = float(np.vdot(slice_, slice_).real)
    return slice_, prob


def sample(state: StateVector, shots: int, seed) -> np.ndarray:
    """Multinomial histogram over basis indices; deterministic given seed."""
    if shots < 0:
        raise ValueError("shots must be >= 0")
    probs = state.probabilities()
    total = probs.sum()
    if abs(total - 1.0) > 1e-6:
        raise ValueError("sample requires a normalized state")
    if shots == 0:
        return np.zeros(probs.shape, dtype=np.int64)
    rng = np.random.default_rng(seed)
    return rng.multinomial(shots, probs / total)


STATE_MAGIC = "QVDS1"


def dump_statevector(state: StateVector, path) -> None:
    """Debug dump: text header, then interleaved little-endian float64 re/im."""
    layout = state.layout
    layout_desc = ("none" if layout is None else
                   f"{layout.n_f},{layout.n_w},{layout.n_c},{layout.n_lfps},"
                   f"{layout.x_bits},{layout.y_bits}")
    header = (f"{STATE_MAGIC}\n"
              f"n_qubits={state.n_qubits} layout={layout_desc} scale={state.scale!r}\n")
    interleaved = np.empty(2 * len(state.amplitudes))
    interleaved[0::2] = state.amplitudes.real
    interleaved[1::2] = state.amplitudes.imag
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(interleaved.astype("<f8").tobytes())


def load_statevector(path) -> StateVector:
    with open(path, "rb") as fh:
        magic = fh.readline().decode("ascii").strip()
        if magic != STATE_MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        meta = dict(kv.split("=") for kv in fh.readline().decode("ascii").split())
        n = int(meta["n_qubits"])
        interleaved = np.frombuffer(fh.read(), dtype="<f8")
    if interleaved.shape[0] != 2 << n:
        raise ValueError(f"{path}: truncated payload")
    layout = None
    if meta["layout"] != "none":
        n_f, n_w, n_c, n_lfps, x_bits, y_bits = map(int, meta["layout"].split(","))
        layout = RegisterLayout(n_f=n_f, n_w=n_w, n_c=n_c, n_lfps=n_lfps,
                                x_bits=x_bits, y_bits=y_bits)
    amps = interleaved[0::2] + 1j * interleaved[1::2]
    return StateVector(n, amps, layout=layout, scale=float(meta["scale"]))
