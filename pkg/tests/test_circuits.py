from pathlib import Path

import numpy as np
import pytest
from scipy.stats import unitary_group

from dctcsim.circuits import (
    ClonerSpec,
    Gate,
    Netlist,
    cloner_input,
    cloner_interaction,
    cloner_netlist,
    cyclic_shift_unitary,
    decohere_in_basis,
    modular_add_gate,
)
from dctcsim.ctc import DctcInteraction, ctc_output, solve_fixed_point_iterate
from dctcsim.qmath import (
    CapExceededError,
    DensityOperator,
    partial_trace,
    random_density_operator,
    tensor_power,
    trace_distance,
)

DATA = Path(__file__).parent / "data"


def index(bits, d=2):
    out = 0
    for b in bits:
        out = out * d + b
    return out


def diag_state(p, label="S"):
    p = np.asarray(p, dtype=float)
    return DensityOperator.from_matrix(np.diag(p / p.sum()), labels=[label])


# --- cyclic shift -----------------------------------------------------------


def test_shift_moves_last_slot_to_front():
    u = cyclic_shift_unitary(2, 3)
    assert u.perm[index([1, 0, 1])] == index([1, 1, 0])
    assert u.perm[index([0, 0, 1])] == index([1, 0, 0])
    m = u.mat
    assert np.all(m.sum(axis=0) == 1) and np.all(m.sum(axis=1) == 1)


@pytest.mark.parametrize("d,k", [(2, 2), (2, 4), (3, 3)])
def test_shift_has_order_k(d, k):
    u = cyclic_shift_unitary(d, k)
    acc = np.eye(d**k)
    for _ in range(k):
        acc = u.mat @ acc
    np.testing.assert_array_equal(acc, np.eye(d**k))
    if k > 1:
        assert not np.array_equal(u.mat, np.eye(d**k))


def test_shift_of_two_qutrits_is_swap():
    swap = np.zeros((9, 9))
    for x in range(3):
        for y in range(3):
            swap[y * 3 + x, x * 3 + y] = 1
    np.testing.assert_array_equal(cyclic_shift_unitary(3, 2).mat, swap)


def test_shift_guards():
    with pytest.raises(ValueError):
        cyclic_shift_unitary(2, 1)
    with pytest.raises(CapExceededError):
        cyclic_shift_unitary(2, 15, cap=2**14)


# --- modular addition -------------------------------------------------------


def test_modadd_qubit_is_cnot():
    cnot = np.eye(4)[[0, 1, 3, 2]]
    np.testing.assert_array_equal(modular_add_gate(2).mat, cnot)
    assert modular_add_gate(2).perm[index([1, 0])] == index([1, 1])


def test_modadd_qutrit():
    u = modular_add_gate(3)
    assert u.perm[index([1, 2], 3)] == index([1, 0], 3)
    for x in range(3):
        for y in range(3):
            assert u.perm[3 * x + y] == 3 * x + (x + y) % 3


def test_modadd_leaves_diagonal_control_alone():
    u = modular_add_gate(3)
    ctrl = random_density_operator(3, "mixed", 1).mat
    ctrl = np.diag(np.diag(ctrl))
    tgt = random_density_operator(3, "mixed", 2).mat
    out = u.mat @ np.kron(ctrl, tgt) @ u.mat.conj().T
    red = np.einsum("ajbj->ab", out.reshape(3, 3, 3, 3))
    np.testing.assert_allclose(red, ctrl, atol=1e-15)


# --- netlists ---------------------------------------------------------------


def test_cloner_topology():
    net = cloner_netlist(ClonerSpec(2, 3))
    assert net.count("shift") == 1
    assert net.count("modadd") == 3
    shift = net.gates[0]
    assert len(shift.units) == 4
    assert shift.slots() == ("S", "C1", "C2", "C3")
    assert net.ctc == ("C1", "C2", "C3")


@pytest.mark.parametrize("spec,name", [
    (ClonerSpec(2, 3), "cloner_measured_d2_n3.netlist"),
    (ClonerSpec(4, 2, "coherent", d_env=2), "cloner_coherent_d4_n2.netlist"),
])
def test_netlist_golden(spec, name):
    golden = (DATA / name).read_text()
    net = cloner_netlist(spec)
    assert net.to_text() == golden
    parsed = Netlist.from_text(golden)
    assert parsed == net
    np.testing.assert_array_equal(parsed.permutation(), net.permutation())


def test_netlist_parse_errors():
    with pytest.raises(ValueError):
        Netlist.from_text("slot S 2 cr\nwire S\n")
    with pytest.raises(ValueError):
        Netlist.from_text("slot S 2 sideways\n")
    with pytest.raises(ValueError):
        Gate("toffoli", (("a",), ("b",)))
    with pytest.raises(ValueError):
        Netlist.from_text("slot S 2 cr\nslot C 3 ctc\ngate shift S C\n")


def test_cloner_unitary_matches_gate_product():
    # dense oracle: explicit embedding of each gate, multiplied in circuit order
    n = 2
    ix = cloner_interaction(ClonerSpec(2, n))
    labels = ix.layout.labels  # S A1 A2 C1 C2
    dims = [2] * len(labels)
    total = 2 ** len(labels)

    def perm_matrix(fn):
        m = np.zeros((total, total))
        for i in range(total):
            digits = list(np.unravel_index(i, dims))
            m[np.ravel_multi_index(fn(digits), dims), i] = 1
        return m

    pos = {lb: k for k, lb in enumerate(labels)}

    def shift(dg):
        out = list(dg)
        out[pos["S"]], out[pos["C1"]], out[pos["C2"]] = dg[pos["C2"]], dg[pos["S"]], dg[pos["C1"]]
        return out

    def add(c, t):
        def fn(dg):
            out = list(dg)
            out[pos[t]] = (dg[pos[c]] + dg[pos[t]]) % 2
            return out
        return fn

    expected = perm_matrix(add("C2", "A2")) @ perm_matrix(add("C1", "A1")) @ perm_matrix(shift)
    np.testing.assert_array_equal(ix.u.mat, expected)


def test_cloner_cap_error_names_dimension():
    with pytest.raises(CapExceededError, match=r"2\^\(2\*7\+1\)"):
        cloner_interaction(ClonerSpec(2, 7))
    with pytest.raises(ValueError):
        ClonerSpec(1, 2)
    with pytest.raises(ValueError):
        ClonerSpec(2, 0)


def test_all_cloner_unitaries_are_permutations():
    for spec in (ClonerSpec(2, 3), ClonerSpec(3, 2), ClonerSpec(4, 1, "coherent", d_env=2)):
        u = cloner_interaction(spec).u
        assert u.perm is not None
        assert np.max(np.abs(u.mat @ u.mat.T - np.eye(u.dim))) < 1e-12


# --- cloner fixed points ----------------------------------------------------


def solve(spec, system):
    ix = cloner_interaction(spec)
    rho_s = cloner_input(spec, system)
    fp = solve_fixed_point_iterate(ix, rho_s)
    return ix, rho_s, fp, ctc_output(ix, rho_s, fp)


@pytest.mark.parametrize("d", [2, 3])
@pytest.mark.parametrize("n", [1, 2, 3])
def test_known_basis_cloning(d, n):
    rho = diag_state(np.arange(1, d + 1))
    _, _, fp, out = solve(ClonerSpec(d, n), rho)
    np.testing.assert_allclose(fp.sigma.mat, tensor_power(rho, n).mat, atol=1e-10)
    assert trace_distance(out, tensor_power(rho, n + 1)) < 1e-10
    assert out.layout.labels == ("S", *[f"A{i}" for i in range(1, n + 1)])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_unknown_basis_gives_decohered_copies(n):
    rng = np.random.default_rng(n)
    for _ in range(3):
        rho = random_density_operator(2, "mixed", rng, labels=["S"])
        _, _, _, out = solve(ClonerSpec(2, n), rho)
        anc = partial_trace(out, [f"A{i}" for i in range(1, n + 1)])
        target = tensor_power(decohere_in_basis(rho, "S"), n)
        assert trace_distance(anc, target) < 1e-9


def test_modular_adds_keep_ctc_populations():
    spec = ClonerSpec(3, 2)
    rho = random_density_operator(3, "mixed", 5, labels=["S"])
    _, rho_s, fp, _ = solve(spec, rho)
    net = cloner_netlist(spec)
    bare = Netlist(net.layout, net.ctc, tuple(g for g in net.gates if g.kind == "shift"))
    ix_bare = DctcInteraction(bare.unitary(), bare.ctc)
    fp_bare = solve_fixed_point_iterate(ix_bare, rho_s)
    # the adds only strip coherences; populations are untouched
    np.testing.assert_allclose(np.diag(fp.sigma.mat), np.diag(fp_bare.sigma.mat), atol=1e-12)
    # without the readout the CTC holds copies of rho itself, coherences included
    np.testing.assert_allclose(fp_bare.sigma.mat, tensor_power(rho, 2).mat, atol=1e-12)
    deco = tensor_power(decohere_in_basis(rho, "S"), 2)
    np.testing.assert_allclose(fp.sigma.mat, deco.mat, atol=1e-12)


def test_known_nonstandard_eigenbasis():
    v = unitary_group.rvs(2, random_state=3)
    p = np.array([0.8, 0.2])
    rho = DensityOperator.from_matrix(v @ np.diag(p) @ v.conj().T, labels=["S"])
    spec = ClonerSpec(2, 2, readout_basis=v)
    _, _, fp, out = solve(spec, rho)
    assert trace_distance(out, tensor_power(rho, 3)) < 1e-10
    # same circuit in the computational basis only yields decohered copies
    _, _, _, plain = solve(ClonerSpec(2, 2), rho)
    assert trace_distance(plain, tensor_power(rho, 3)) > 0.05


# --- decoherence ------------------------------------------------------------


def test_decohere_examples():
    rho = diag_state([0.3, 0.7])
    np.testing.assert_array_equal(decohere_in_basis(rho, "S").mat, rho.mat)
    plus = DensityOperator.from_ket([1, 1], labels=["S"])
    np.testing.assert_allclose(decohere_in_basis(plus, "S").mat, np.eye(2) / 2)
    r = random_density_operator(3, "mixed", 2, labels=["S"])
    once = decohere_in_basis(r, "S")
    np.testing.assert_allclose(decohere_in_basis(once, "S").mat, once.mat)
    with pytest.raises(KeyError):
        decohere_in_basis(r, "Q")


def test_decohere_single_slot_of_many():
    a = random_density_operator(2, "mixed", 1).mat
    b = random_density_operator(3, "mixed", 2).mat
    joint = DensityOperator.from_matrix(np.kron(a, b), dims=[2, 3], labels=["a", "b"])
    out = decohere_in_basis(joint, "b")
    np.testing.assert_allclose(out.mat, np.kron(a, np.diag(np.diag(b))), atol=1e-15)


def test_decohere_in_custom_basis():
    h = np.array([[1, 1], [1, -1]]) / np.sqrt(2)
    plus = DensityOperator.from_ket([1, 1], labels=["S"])
    np.testing.assert_allclose(decohere_in_basis(plus, "S", basis=h).mat, plus.mat, atol=1e-15)
