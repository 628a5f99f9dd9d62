import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import unitary_group

from dctcsim import ctc
from dctcsim.circuits import ClonerSpec, cloner_input, cloner_interaction, cyclic_shift_unitary
from dctcsim.ctc import (
    DctcInteraction,
    apply_phi,
    ctc_output,
    phi_superoperator,
    solve_fixed_point_iterate,
    solve_fixed_point_spectral,
)
from dctcsim.qmath import (
    CapExceededError,
    DensityOperator,
    SubsystemLayout,
    UnitaryOperator,
    maximally_mixed,
    random_density_operator,
    tensor_power,
    tensor_product,
    trace_distance,
)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def layout_sc(d_s, d_c):
    return SubsystemLayout((d_s, d_c), ("S", "C"))


def identity_ix(d=2):
    return DctcInteraction(UnitaryOperator(np.eye(d * d), layout_sc(d, d)), ("C",))


def swap_ix(d=2):
    return DctcInteraction(UnitaryOperator(cyclic_shift_unitary(d, 2).mat, layout_sc(d, d)), ("C",))


def random_ix(d_s, d_c, seed):
    return DctcInteraction(UnitaryOperator(unitary_group.rvs(d_s * d_c, random_state=seed),
                                           layout_sc(d_s, d_c)), ("C",))


def forced_dense(ix):
    """Same interaction, but routed through the literal kron/conjugate/trace path."""
    u = UnitaryOperator(ix.u.mat, ix.u.layout)
    u.perm = None
    return DctcInteraction(u, ix.c_slots)


# --- apply_phi --------------------------------------------------------------


def test_phi_identity_and_swap():
    rho = random_density_operator(2, "mixed", 1)
    sigma = random_density_operator(2, "mixed", 2)
    np.testing.assert_allclose(apply_phi(identity_ix(), rho, sigma).mat, sigma.mat, atol=1e-15)
    np.testing.assert_allclose(apply_phi(swap_ix(), rho, sigma).mat, rho.mat, atol=1e-15)


def test_phi_first_cyclic_step():
    n = 3
    rho = random_density_operator(2, "mixed", 3)
    spec = ClonerSpec(2, n)
    ix = cloner_interaction(spec)
    out = apply_phi(ix, cloner_input(spec, rho), maximally_mixed(ix.c_layout))
    # C1 receives rho, then its add onto A1 strips the coherences
    expected = tensor_product(np.diag(np.diag(rho.mat)), np.eye(2 ** (n - 1)) / 2 ** (n - 1))
    np.testing.assert_allclose(out.mat, expected, atol=1e-15)


def test_phi_dimension_checks():
    with pytest.raises(ValueError):
        apply_phi(identity_ix(), random_density_operator(3, "mixed", 0),
                  random_density_operator(2, "mixed", 0))


@pytest.mark.parametrize("spec", [ClonerSpec(2, 2), ClonerSpec(3, 1), ClonerSpec(4, 1, "coherent", d_env=2)])
def test_gather_path_matches_dense_path(spec):
    ix = cloner_interaction(spec)
    dense = forced_dense(ix)
    rng = np.random.default_rng(0)
    rho_s = random_density_operator(ix.d_s, "mixed", rng)
    sigma = random_density_operator(ix.d_c, "mixed", rng)
    rho_s = DensityOperator(rho_s.mat, ix.s_layout)
    sigma = DensityOperator(sigma.mat, ix.c_layout)
    np.testing.assert_allclose(apply_phi(ix, rho_s, sigma).mat, apply_phi(dense, rho_s, sigma).mat, atol=1e-13)
    fp = solve_fixed_point_iterate(ix, rho_s)
    np.testing.assert_allclose(ctc_output(ix, rho_s, fp).mat, ctc_output(dense, rho_s, fp).mat, atol=1e-13)
    np.testing.assert_allclose(phi_superoperator(ix, rho_s), phi_superoperator(dense, rho_s), atol=1e-13)


def test_slot_order_is_normalized():
    # same physical interaction written with the CTC slot first
    base = random_ix(2, 3, 7)
    m = base.u.mat.reshape(2, 3, 2, 3).transpose(1, 0, 3, 2).reshape(6, 6)
    flipped = DctcInteraction(UnitaryOperator(m, SubsystemLayout((3, 2), ("C", "S"))), ("C",))
    assert flipped.s_slots == ("S",)
    rho = random_density_operator(2, "mixed", 1)
    sigma = random_density_operator(3, "mixed", 2)
    np.testing.assert_allclose(apply_phi(flipped, rho, sigma).mat, apply_phi(base, rho, sigma).mat, atol=1e-13)
    perm_flipped = DctcInteraction(
        UnitaryOperator.from_permutation(
            cyclic_shift_unitary(2, 3).perm, SubsystemLayout((2, 2, 2), ("C1", "S", "C2"))),
        ("C1", "C2"))
    assert perm_flipped.u_sc.layout.labels == ("S", "C1", "C2")
    np.testing.assert_allclose(
        apply_phi(perm_flipped, rho, random_density_operator(4, "mixed", 3)).mat,
        apply_phi(forced_dense(perm_flipped), rho, random_density_operator(4, "mixed", 3)).mat,
        atol=1e-13)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_phi_outputs_valid_states(seed):
    ix = random_ix(2, 3, seed)
    rho = random_density_operator(2, "mixed", seed)
    sigma = random_density_operator(3, "pure", seed + 1)
    out = apply_phi(ix, rho, sigma)  # DensityOperator validates Hermitian, PSD, unit trace
    assert out.layout.labels == ("C",)


# --- superoperator ----------------------------------------------------------


def superoperator_by_matrix_units(ix, rho_s):
    dc = ix.d_c
    cols = []
    for j in range(dc):
        for k in range(dc):
            unit = np.zeros((dc, dc), dtype=complex)
            unit[j, k] = 1
            cols.append(ctc._phi_array(ix, rho_s.mat, unit).ravel())
    return np.stack(cols, axis=1)


@pytest.mark.parametrize("which", ["random", "cloner"])
def test_superoperator_matches_matrix_units(which):
    if which == "random":
        ix = random_ix(2, 2, 11)
        rho_s = random_density_operator(2, "mixed", 12)
    else:
        spec = ClonerSpec(2, 2)
        ix = cloner_interaction(spec)
        rho_s = cloner_input(spec, random_density_operator(2, "mixed", 13, labels=["S"]))
    np.testing.assert_allclose(phi_superoperator(ix, rho_s), superoperator_by_matrix_units(ix, rho_s),
                               atol=1e-13)


def test_superoperator_is_trace_preserving():
    ix = random_ix(3, 2, 5)
    sup = phi_superoperator(ix, random_density_operator(3, "mixed", 6))
    # row-major vec: trace functional is vec(I)
    np.testing.assert_allclose(np.eye(2).ravel() @ sup, np.eye(2).ravel(), atol=1e-13)


# --- iterative solver -------------------------------------------------------


def test_iterate_exactly_n_steps():
    rho = DensityOperator.from_matrix(np.diag([0.7, 0.3]), labels=["S"])
    spec = ClonerSpec(2, 3)
    fp = solve_fixed_point_iterate(cloner_interaction(spec), cloner_input(spec, rho))
    assert fp.converged
    assert fp.iterations == 3
    assert fp.residual < 1e-15
    np.testing.assert_allclose(fp.sigma.mat, tensor_power(rho, 3).mat, atol=1e-15)
    assert fp.residuals[-1] < 1e-15 and all(r > 0 for r in fp.residuals[:-1])


def test_iterate_trivial_interactions():
    rho = random_density_operator(2, "mixed", 1)
    sigma0 = random_density_operator(2, "mixed", 2)
    fp = solve_fixed_point_iterate(identity_ix(), rho, sigma0)
    assert fp.iterations == 1 and fp.residual < 1e-15
    np.testing.assert_allclose(fp.sigma.mat, sigma0.mat)
    fp = solve_fixed_point_iterate(swap_ix(), rho, sigma0)
    assert fp.iterations == 1
    np.testing.assert_allclose(fp.sigma.mat, rho.mat, atol=1e-15)


def test_iterate_reports_non_convergence():
    ix = random_ix(2, 2, 3)
    fp = solve_fixed_point_iterate(ix, random_density_operator(2, "mixed", 4), tol=1e-15, max_iter=2)
    assert not fp.converged
    assert fp.iterations == 2
    assert fp.residual > 1e-15
    with pytest.raises(ValueError):
        solve_fixed_point_iterate(ix, random_density_operator(2, "mixed", 4), tol=0)


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_returned_fixed_point_is_consistent(seed):
    ix = random_ix(2, 2, seed)
    rho = random_density_operator(2, "mixed", seed)
    tol = 1e-11
    fp = solve_fixed_point_iterate(ix, rho, tol=tol)
    if fp.converged:
        assert trace_distance(apply_phi(ix, rho, fp.sigma), fp.sigma) <= 10 * tol


# --- spectral solver --------------------------------------------------------


@pytest.mark.parametrize("d,n", [(2, 1), (2, 3), (3, 2)])
def test_spectral_unique_for_cloner(d, n):
    rho = random_density_operator(d, "mixed", d * 10 + n, labels=["S"])
    rho = DensityOperator.from_matrix(np.diag(np.diag(rho.mat)), labels=["S"])
    spec = ClonerSpec(d, n)
    sp = solve_fixed_point_spectral(cloner_interaction(spec), cloner_input(spec, rho))
    assert sp.ev1_multiplicity == 1
    np.testing.assert_allclose(sp.sigma.mat, tensor_power(rho, n).mat, atol=1e-10)


def test_spectral_rank_deficient_input_still_unique():
    rho = DensityOperator.from_matrix(np.diag([1.0, 0.0, 0.0]), labels=["S"])
    spec = ClonerSpec(3, 2)
    sp = solve_fixed_point_spectral(cloner_interaction(spec), cloner_input(spec, rho))
    assert sp.ev1_multiplicity == 1


def test_spectral_identity_fixes_everything():
    sp = solve_fixed_point_spectral(identity_ix(3), random_density_operator(3, "mixed", 0))
    assert sp.ev1_multiplicity == 9
    np.testing.assert_allclose(sp.sigma.mat, np.eye(3) / 3, atol=1e-14)


def test_spectral_swap():
    rho = random_density_operator(2, "mixed", 8)
    sp = solve_fixed_point_spectral(swap_ix(), rho)
    assert sp.ev1_multiplicity == 1
    np.testing.assert_allclose(sp.sigma.mat, rho.mat, atol=1e-12)


def test_spectral_and_iterative_agree_on_random_interactions():
    agreed = 0
    for seed in range(20):
        ix = random_ix(2, 3, seed)
        rho = random_density_operator(2, "mixed", 100 + seed)
        sp = solve_fixed_point_spectral(ix, rho)
        if sp.ev1_multiplicity != 1:
            continue
        it = solve_fixed_point_iterate(ix, rho)
        assert it.converged
        assert trace_distance(sp.sigma, it.sigma) < 1e-8
        agreed += 1
    assert agreed >= 15


def test_spectral_corruption_is_reported(monkeypatch):
    ix = identity_ix()
    monkeypatch.setattr(ctc, "phi_superoperator", lambda ix, rho: 0.5 * np.eye(4))
    with pytest.raises(ctc.FixedPointError):
        solve_fixed_point_spectral(ix, random_density_operator(2, "mixed", 0))


# --- outputs ----------------------------------------------------------------


def test_output_identity_and_swap():
    rho = random_density_operator(2, "mixed", 21)
    fp = solve_fixed_point_iterate(identity_ix(), rho)
    np.testing.assert_allclose(ctc_output(identity_ix(), rho, fp).mat, rho.mat, atol=1e-15)
    fp = solve_fixed_point_iterate(swap_ix(), rho)
    np.testing.assert_allclose(ctc_output(swap_ix(), rho, fp).mat, rho.mat, atol=1e-15)


def test_output_is_nonlinear_in_the_input():
    spec = ClonerSpec(2, 2)
    ix = cloner_interaction(spec)

    def out(rho):
        rho_s = cloner_input(spec, rho)
        return ctc_output(ix, rho_s, solve_fixed_point_iterate(ix, rho_s)).mat

    r1 = DensityOperator.from_matrix(np.diag([1.0, 0.0]), labels=["S"])
    r2 = DensityOperator.from_matrix(np.diag([0.0, 1.0]), labels=["S"])
    mix = DensityOperator.from_matrix(np.eye(2) / 2, labels=["S"])
    gap = trace_distance(out(mix), 0.5 * (out(r1) + out(r2)))
    assert gap > 0.5


def test_interaction_validation():
    u = UnitaryOperator(np.eye(4), layout_sc(2, 2))
    with pytest.raises(KeyError):
        DctcInteraction(u, ("Z",))
    with pytest.raises(ValueError):
        DctcInteraction(u, ("S", "C"))
    with pytest.raises(CapExceededError):
        DctcInteraction(u, ("C",), cap=2)
