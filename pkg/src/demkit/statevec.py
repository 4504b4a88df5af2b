"""Dense statevector engine for small coherent-noise simulations.

Qubit 0 is the least significant bit of the basis-state index.  All gate
kernels work in place on a flat complex128 array through reshaped views,
so no full-size copies are made for single- or two-qubit gates.  The
qubit count is capped at 26 (1 GiB of amplitudes) because everything this
package simulates coherently fits well below that.

Conventions:
  RZ(phi)      diag(e^{-i phi/2}, e^{+i phi/2})        = e^{-i(phi/2) Z}
  RZZ(phi)     e^{-i(phi/2) Z (x) Z}
so a coherent Z over-rotation by angle theta is RZ(2*theta) and a coupled
ZZ rotation by theta_G is RZZ(2*theta_G).
"""

from __future__ import annotations

import math

import numpy as np

from .errors import CapabilityError

_MAX_QUBITS = 26
_SQRT_HALF = 1.0 / math.sqrt(2.0)
_MASS_EPS = 1e-12


class StateVector:
    """Flat dense statevector with in-place gate application."""

    def __init__(self, n_qubits: int):
        if n_qubits < 1:
            raise ValueError(f"need at least one qubit, got {n_qubits}")
        if n_qubits > _MAX_QUBITS:
            raise CapabilityError(
                f"statevector capped at {_MAX_QUBITS} qubits, got {n_qubits}"
            )
        self.n_qubits = n_qubits
        self.amps = np.zeros(2**n_qubits, dtype=np.complex128)
        self.amps[0] = 1.0
        self._indices: np.ndarray | None = None

    # -- helpers -------------------------------------------------------

    def _axis(self, q: int) -> np.ndarray:
        """View with qubit q isolated on the middle axis."""
        n = self.n_qubits
        if not 0 <= q < n:
            raise ValueError(f"qubit {q} out of range for {n} qubits")
        return self.amps.reshape(2 ** (n - 1 - q), 2, 2**q)

    def _pair_axes(self, qa: int, qb: int) -> tuple[np.ndarray, int, int]:
        """View with qubits qa, qb isolated; returns (view, axis_a, axis_b).

        axis_a is the view axis carrying qa's bit (1 or 3), same for qb.
        """
        if qa == qb:
            raise ValueError("two-qubit gate needs distinct qubits")
        n = self.n_qubits
        hi, lo = max(qa, qb), min(qa, qb)
        if lo < 0 or hi >= n:
            raise ValueError(f"qubits ({qa},{qb}) out of range for {n} qubits")
        view = self.amps.reshape(
            2 ** (n - 1 - hi), 2, 2 ** (hi - lo - 1), 2, 2**lo
        )
        if qa == hi:
            return view, 1, 3
        return view, 3, 1

    def _index_cache(self) -> np.ndarray:
        if self._indices is None:
            self._indices = np.arange(self.amps.size, dtype=np.uint32)
        return self._indices

    def norm(self) -> float:
        return float(np.sqrt(np.vdot(self.amps, self.amps).real))

    def copy(self) -> "StateVector":
        dup = StateVector.__new__(StateVector)
        dup.n_qubits = self.n_qubits
        dup.amps = self.amps.copy()
        dup._indices = None
        return dup

    # -- gates ---------------------------------------------------------

    def apply_h(self, q: int) -> None:
        v = self._axis(q)
        a = v[:, 0, :]
        b = v[:, 1, :]
        s = (a + b) * _SQRT_HALF
        d = (a - b) * _SQRT_HALF
        a[:] = s
        b[:] = d

    def apply_x(self, q: int) -> None:
        v = self._axis(q)
        tmp = v[:, 0, :].copy()
        v[:, 0, :] = v[:, 1, :]
        v[:, 1, :] = tmp

    def apply_z(self, q: int) -> None:
        v = self._axis(q)
        v[:, 1, :] *= -1.0

    def apply_rz(self, q: int, phi: float) -> None:
        v = self._axis(q)
        v[:, 0, :] *= np.exp(-0.5j * phi)
        v[:, 1, :] *= np.exp(0.5j * phi)

    def apply_cnot(self, control: int, target: int) -> None:
        view, ax_c, ax_t = self._pair_axes(control, target)
        # Slice out the control=1 block, then swap the target bit in it.
        if ax_c == 1:
            sub = view[:, 1]
            t_axis = ax_t - 1
        else:
            sub = view[:, :, :, 1]
            t_axis = ax_t
        sel0 = [slice(None)] * 4
        sel1 = [slice(None)] * 4
        sel0[t_axis] = 0
        sel1[t_axis] = 1
        tmp = sub[tuple(sel0)].copy()
        sub[tuple(sel0)] = sub[tuple(sel1)]
        sub[tuple(sel1)] = tmp

    def apply_rzz(self, qa: int, qb: int, phi: float) -> None:
        view, ax_a, ax_b = self._pair_axes(qa, qb)
        even = np.exp(-0.5j * phi)
        odd = np.exp(0.5j * phi)
        for bit_a in (0, 1):
            for bit_b in (0, 1):
                sel = [slice(None)] * 5
                sel[ax_a] = bit_a
                sel[ax_b] = bit_b
                view[tuple(sel)] *= even if bit_a == bit_b else odd

    # -- measurement and projection -------------------------------------

    def measure_qubit(self, q: int, rng: np.random.Generator) -> int:
        """Projective Z measurement. Collapses in place, returns the bit."""
        v = self._axis(q)
        b = v[:, 1, :]
        p1 = float(np.sum(b.real**2 + b.imag**2))
        outcome = int(rng.random() < p1)
        self._collapse_bit(v, outcome, p1 if outcome else 1.0 - p1)
        return outcome

    def reset_qubit(self, q: int, rng: np.random.Generator) -> None:
        """Measure in Z, then flip to |0>. Draws randomness only if the
        qubit is genuinely in superposition."""
        v = self._axis(q)
        b = v[:, 1, :]
        p1 = float(np.sum(b.real**2 + b.imag**2))
        if p1 < 1e-9:
            outcome = 0
        elif p1 > 1.0 - 1e-9:
            outcome = 1
        else:
            outcome = int(rng.random() < p1)
        self._collapse_bit(v, outcome, p1 if outcome else 1.0 - p1)
        if outcome:
            self.apply_x(q)

    def _collapse_bit(self, v: np.ndarray, outcome: int, mass: float) -> None:
        if mass < _MASS_EPS:
            raise ValueError(
                f"measurement branch has mass {mass:.3e}; state is degenerate"
            )
        v[:, 1 - outcome, :] = 0.0
        self.amps *= 1.0 / math.sqrt(mass)

    def _x_mask(self, support: tuple[int, ...] | list[int]) -> int:
        mask = 0
        for q in support:
            if not 0 <= q < self.n_qubits:
                raise ValueError(f"qubit {q} out of range")
            mask |= 1 << q
        if mask == 0:
            raise ValueError("empty Pauli support")
        return mask

    def project_x_string(
        self,
        support: tuple[int, ...] | list[int],
        rng: np.random.Generator,
        flip_prob: float = 0.0,
    ) -> int:
        """Measure the X-type stabilizer X_{q1} X_{q2} ... projectively.

        Collapses the state onto the sampled eigenspace and returns the
        *recorded* bit (0 for +1, 1 for -1).  With flip_prob > 0 the
        record is flipped with that probability while the state keeps the
        true post-measurement branch: a classical readout error.
        """
        mask = self._x_mask(support)
        idx = self._index_cache()
        flipped = self.amps[idx ^ np.uint32(mask)]
        plus = 0.5 * (self.amps + flipped)
        p_plus = float(np.vdot(plus, plus).real)
        outcome = int(rng.random() >= p_plus)
        if outcome == 0:
            self.amps[:] = plus
        else:
            self.amps -= flipped
            self.amps *= 0.5
        mass = float(np.vdot(self.amps, self.amps).real)
        if mass < _MASS_EPS:
            raise ValueError(
                f"stabilizer projection branch has mass {mass:.3e}"
            )
        self.amps *= 1.0 / math.sqrt(mass)
        recorded = outcome
        if flip_prob > 0.0 and rng.random() < flip_prob:
            recorded ^= 1
        return recorded

    def project_z_plus(self, support: tuple[int, ...] | list[int]) -> None:
        """Project deterministically onto the +1 eigenspace of a Z string.

        Used to prepare encoded states: on |+...+>, projecting a
        stabilizer-group Z check to +1 equals measuring it and applying
        an X correction, because the correction maps the -1 branch onto
        the +1 branch exactly.  Raises if the +1 branch has no weight.
        """
        mask = self._x_mask(support)  # same validation, different Pauli
        idx = self._index_cache()
        parity = np.bitwise_count(idx & np.uint32(mask)).astype(np.uint8) & 1
        self.amps[parity == 1] = 0.0
        mass = float(np.vdot(self.amps, self.amps).real)
        if mass < _MASS_EPS:
            raise ValueError("state has no overlap with the +1 eigenspace")
        self.amps *= 1.0 / math.sqrt(mass)

    # -- observables -----------------------------------------------------

    def expectation_x_string(
        self, support: tuple[int, ...] | list[int]
    ) -> float:
        mask = self._x_mask(support)
        idx = self._index_cache()
        flipped = self.amps[idx ^ np.uint32(mask)]
        return float(np.vdot(self.amps, flipped).real)

    def expectation_z_string(
        self, support: tuple[int, ...] | list[int]
    ) -> float:
        mask = self._x_mask(support)
        idx = self._index_cache()
        parity = np.bitwise_count(idx & np.uint32(mask)).astype(np.uint8) & 1
        signs = 1.0 - 2.0 * parity
        return float(np.sum((self.amps.real**2 + self.amps.imag**2) * signs))


# -- module-level API ----------------------------------------------------


def apply_gate(
    state: StateVector,
    gate: str,
    targets: tuple[int, ...] | list[int],
    param: float | None = None,
) -> None:
    """Apply a named gate. Mnemonics match the circuit text format."""
    if gate == "H":
        (q,) = targets
        state.apply_h(q)
    elif gate == "X":
        (q,) = targets
        state.apply_x(q)
    elif gate == "Z":
        (q,) = targets
        state.apply_z(q)
    elif gate == "RZ":
        (q,) = targets
        if param is None:
            raise ValueError("RZ needs an angle")
        state.apply_rz(q, param)
    elif gate == "CNOT":
        c, t = targets
        state.apply_cnot(c, t)
    elif gate == "RZZ":
        a, b = targets
        if param is None:
            raise ValueError("RZZ needs an angle")
        state.apply_rzz(a, b, param)
    else:
        raise ValueError(f"unknown gate {gate!r}")


def measure_qubit(
    state: StateVector, q: int, rng: np.random.Generator
) -> int:
    return state.measure_qubit(q, rng)


def project_stabilizer(
    state: StateVector,
    x_support: tuple[int, ...] | list[int],
    rng: np.random.Generator,
    flip_prob: float = 0.0,
) -> int:
    return state.project_x_string(x_support, rng, flip_prob)


def expectation_pauli(
    state: StateVector, pauli: tuple[str, tuple[int, ...]]
) -> float:
    """Expectation of a single-type Pauli string, e.g. ("X", (0, 1, 2))."""
    kind, support = pauli
    if kind == "X":
        return state.expectation_x_string(support)
    if kind == "Z":
        return state.expectation_z_string(support)
    raise ValueError(f"unsupported Pauli kind {kind!r}; use 'X' or 'Z'")
