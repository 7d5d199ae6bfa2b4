"""Independent dense-matrix oracles for the test suite.

Everything here is built from single-qubit matrices and np.kron, reading
only labels and coefficients from package objects, so it shares no code
path with the bit-mask algebra under test.
"""

import numpy as np

PAULI_1Q = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def dense_from_label(label: str) -> np.ndarray:
    m = np.ones((1, 1), dtype=complex)
    for letter in label:
        m = np.kron(m, PAULI_1Q[letter])
    return m


def dense_op(op) -> np.ndarray:
    """Dense matrix of an OperatorVector, via labels only."""
    m = np.zeros((2**op.length, 2**op.length), dtype=complex)
    for p, c in op.terms():
        m += c * dense_from_label(p.label)
    return m


def frob_inner(a: np.ndarray, b: np.ndarray, length: int) -> complex:
    return complex(np.trace(a.conj().T @ b) / 2**length)


def frob_norm(a: np.ndarray, length: int) -> float:
    return float(np.sqrt(frob_inner(a, a, length).real))


def all_labels(length: int):
    """All 4^L Pauli labels in an arbitrary but fixed order."""
    labels = [""]
    for _ in range(length):
        labels = [lbl + letter for lbl in labels for letter in "IXYZ"]
    return labels
