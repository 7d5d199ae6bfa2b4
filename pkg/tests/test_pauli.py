"""Pauli-string algebra against exhaustive dense-matrix oracles."""

import numpy as np
import pytest

from slowmodes.pauli import (OperatorVector, PauliString, commutator, commutes,
                             inner, multiply, size)
from slowmodes.models import HamiltonianSpec, build_hamiltonian, tfim_a

from oracles import all_labels, dense_from_label, dense_op, frob_inner, frob_norm


class TestMultiply:
    def test_single_site_table(self):
        phase, r = multiply(PauliString.from_label("X"), PauliString.from_label("Z"))
        assert phase == -1j and r.label == "Y"
        phase, r = multiply(PauliString.from_label("Y"), PauliString.from_label("Y"))
        assert phase == 1 and r.label == "I"

    def test_two_site_example(self):
        # Z1 Z2 * X2 = i Z1 Y2, checked below exhaustively against kron products
        phase, r = multiply(PauliString.from_label("ZZ"), PauliString.from_label("IX"))
        assert phase == 1j and r.label == "ZY"

    @pytest.mark.parametrize("length", [1, 2, 3])
    def test_exhaustive_vs_dense(self, length):
        labels = all_labels(length)
        for la in labels:
            ma = dense_from_label(la)
            for lb in labels:
                phase, r = multiply(PauliString.from_label(la),
                                    PauliString.from_label(lb))
                expected = ma @ dense_from_label(lb)
                np.testing.assert_allclose(phase * dense_from_label(r.label),
                                           expected, atol=1e-14)

    def test_associative(self):
        rng = np.random.default_rng(7)
        labels = all_labels(3)
        for _ in range(200):
            a, b, c = (PauliString.from_label(labels[i])
                       for i in rng.integers(0, len(labels), 3))
            ph_ab, ab = multiply(a, b)
            ph1, r1 = multiply(ab, c)
            ph_bc, bc = multiply(b, c)
            ph2, r2 = multiply(a, bc)
            assert r1 == r2
            assert ph_ab * ph1 == ph_bc * ph2

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            multiply(PauliString.from_label("X"), PauliString.from_label("XX"))


class TestCommutes:
    def test_examples(self):
        assert not commutes(PauliString.from_label("X"), PauliString.from_label("Z"))
        assert commutes(PauliString.from_label("ZI"), PauliString.from_label("ZZ"))
        assert not commutes(PauliString.from_label("ZYI"), PauliString.from_label("IXX"))

    @pytest.mark.parametrize("length", [1, 2, 3])
    def test_exhaustive_either_commute_or_anticommute(self, length):
        labels = all_labels(length)
        for la in labels:
            ma = dense_from_label(la)
            for lb in labels:
                mb = dense_from_label(lb)
                comm_norm = frob_norm(ma @ mb - mb @ ma, length)
                if commutes(PauliString.from_label(la), PauliString.from_label(lb)):
                    assert comm_norm < 1e-13
                else:
                    assert abs(comm_norm - 2.0) < 1e-13


class TestCommutator:
    def test_single_site(self):
        z = OperatorVector.from_labels([("Z", 1.0)])
        x = OperatorVector.from_labels([("X", 1.0)])
        out = commutator(z, x)
        assert len(out) == 1
        assert abs(out.coefficient(PauliString.from_label("Y")) - 2j) < 1e-15

    def test_commuting_strings_vanish(self):
        a = OperatorVector.from_labels([("ZI", 1.0)])
        b = OperatorVector.from_labels([("ZZ", 1.0)])
        assert commutator(a, b).norm() == 0.0

    def test_tfim_conserved_bilinear(self):
        # [H_TFIM, A_1] = 0 on the periodic chain; dense oracle at L = 4
        spec = HamiltonianSpec.tfim(4, 1.0, 0.5)
        h = build_hamiltonian(spec)
        a1 = tfim_a(4, 1)
        assert commutator(h, a1).norm() < 1e-12
        hd, ad = dense_op(h), dense_op(a1)
        assert frob_norm(hd @ ad - ad @ hd, 4) < 1e-12

    def test_bilinear_antisymmetric(self):
        rng = np.random.default_rng(3)
        labels = all_labels(3)
        ops = []
        for _ in range(2):
            terms = [(labels[i], complex(*rng.standard_normal(2)))
                     for i in rng.integers(0, len(labels), 5)]
            ops.append(OperatorVector.from_labels(terms))
        a, b = ops
        assert (commutator(a, b) + commutator(b, a)).norm() < 1e-12


class TestInnerAndNorm:
    def test_unit_strings(self):
        z1 = OperatorVector.from_labels([("ZI", 1.0)])
        z2 = OperatorVector.from_labels([("IZ", 1.0)])
        assert inner(z1, z1) == 1
        assert inner(z1, z2) == 0

    def test_linearity(self):
        mix = OperatorVector.from_labels([("ZI", 1 / np.sqrt(2)), ("IX", 1 / np.sqrt(2))])
        z1 = OperatorVector.from_labels([("ZI", 1.0)])
        assert abs(inner(mix, z1) - 1 / np.sqrt(2)) < 1e-15

    @pytest.mark.parametrize("length", [2, 3])
    def test_random_vs_dense(self, length):
        rng = np.random.default_rng(11)
        labels = all_labels(length)
        for _ in range(20):
            ta = [(labels[i], complex(*rng.standard_normal(2)))
                  for i in rng.integers(0, len(labels), 6)]
            tb = [(labels[i], complex(*rng.standard_normal(2)))
                  for i in rng.integers(0, len(labels), 6)]
            a, b = OperatorVector.from_labels(ta), OperatorVector.from_labels(tb)
            expected = frob_inner(dense_op(a), dense_op(b), length)
            assert abs(inner(a, b) - expected) < 1e-12
            assert abs(a.norm() ** 2 - inner(a, a).real) < 1e-12
            assert abs(inner(a, b) - np.conjugate(inner(b, a))) < 1e-12

    def test_hermitian_real_coefficients(self):
        op = OperatorVector.from_labels([("XY", 0.3), ("ZI", -1.2)])
        assert op.is_hermitian()
        assert not (1j * op).is_hermitian()


class TestSize:
    def test_strings_integer_support(self):
        assert size(OperatorVector.from_labels([("ZII", 1.0)])) == 1
        assert size(OperatorVector.from_labels([("ZYX", 1.0)])) == 3

    def test_equal_weights(self):
        op = OperatorVector.from_labels([("ZI", 1 / np.sqrt(2)), ("ZZ", 1 / np.sqrt(2))])
        assert abs(size(op) - 1.5) < 1e-15

    def test_mfim_size_formula(self):
        # direct evaluation of the weighted-average size over the term list:
        # (2 J^2 + h_z^2 + h_x^2) / (J^2 + h_z^2 + h_x^2)
        spec = HamiltonianSpec.mfim(7, 1.0, 0.7, 1.1)
        h = build_hamiltonian(spec)
        expected = (2 * 1.0 + 0.7**2 + 1.1**2) / (1.0 + 0.7**2 + 1.1**2)
        assert abs(h.size() - expected) < 1e-12
        assert abs(expected - 1.3704) < 1e-4

    def test_zero_operator_rejected(self):
        with pytest.raises(ValueError):
            size(OperatorVector.zero(3))


class TestTranslate:
    def test_shift_examples(self):
        p = PauliString.from_label("ZXI")
        assert p.translate(1).label == "IZX"
        assert PauliString.from_label("IIX").translate(1).label == "XII"
        ident = PauliString.identity(3)
        assert ident.translate(2) == ident

    def test_full_cycle_is_identity(self):
        p = PauliString.from_label("XYZI")
        assert p.translate(4) == p
        assert p.translate(7) == p.translate(3)


class TestOperatorVector:
    def test_product_matches_dense(self):
        rng = np.random.default_rng(5)
        labels = all_labels(2)
        for _ in range(10):
            ta = [(labels[i], complex(*rng.standard_normal(2)))
                  for i in rng.integers(0, 16, 4)]
            tb = [(labels[i], complex(*rng.standard_normal(2)))
                  for i in rng.integers(0, 16, 4)]
            a, b = OperatorVector.from_labels(ta), OperatorVector.from_labels(tb)
            np.testing.assert_allclose(dense_op(a @ b), dense_op(a) @ dense_op(b),
                                       atol=1e-12)

    def test_prune_keeps_norm_checks_intact(self):
        op = OperatorVector.from_labels([("Z", 1.0), ("X", 1e-16)])
        assert len(op) == 1  # the 1e-16 component is below the relative cutoff

    def test_serialization_round_trip(self):
        rng = np.random.default_rng(13)
        labels = all_labels(3)
        terms = [(labels[i], complex(*rng.standard_normal(2)))
                 for i in rng.integers(0, len(labels), 12)]
        op = OperatorVector.from_labels(terms)
        again = OperatorVector.from_text(op.to_text())
        assert again == op

    def test_serialization_zero_operator(self):
        z = OperatorVector.zero(4)
        assert OperatorVector.from_text(z.to_text(), length=4) == z

    def test_dagger(self):
        op = OperatorVector.from_labels([("XY", 1 + 2j)])
        np.testing.assert_allclose(dense_op(op.dagger()),
                                   dense_op(op).conj().T, atol=1e-14)

    def test_length_mismatch(self):
        a = OperatorVector.from_labels([("X", 1.0)])
        b = OperatorVector.from_labels([("XX", 1.0)])
        with pytest.raises(ValueError):
            a + b
        with pytest.raises(ValueError):
            a.inner(b)
