import math

import numpy as np
import pytest
import sympy as sp

import oracles
from conftest import C_TRUE
from freebench import _pykernels, bench, continuum, kernels
from freebench.continuum import DeformedGeometry, MaterialParams
from freebench.core import DEG, KPA, MM, FreeDesign, KinematicState, NoEquilibrium, RecordArrays

TABLE = dict(bench.table1_designs())


def design(sid):
    return TABLE[sid]


def state(d, dl_mm, dphi_deg):
    return KinematicState(d.length_L + dl_mm * MM, dphi_deg * DEG)


def random_isochoric(rng):
    A = rng.normal(scale=0.3, size=(3, 3)) + np.eye(3)
    if np.linalg.det(A) < 0:
        A[0] *= -1
    return A / np.cbrt(np.linalg.det(A))


def sympy_gradient(R_val, ri_val, lam_val, phi_val, L_val, Ri_val):
    """Physical components of Grad x for r(R), theta = Theta + Z phi / L, z = lam Z."""
    R, Th, Z = sp.symbols("R Theta Z", positive=True)
    Ri, ri, lam, phi, L = sp.symbols("R_i r_i lambda phi L", positive=True)
    r = sp.sqrt((R ** 2 - Ri ** 2) / lam + ri ** 2)
    th = Th + Z * phi / L
    z = lam * Z
    F = sp.Matrix([
        [sp.diff(r, R), sp.diff(r, Th) / R, sp.diff(r, Z)],
        [r * sp.diff(th, R), r * sp.diff(th, Th) / R, r * sp.diff(th, Z)],
        [sp.diff(z, R), sp.diff(z, Th) / R, sp.diff(z, Z)],
    ])
    subs = {R: R_val, ri: ri_val, lam: lam_val, phi: phi_val, L: L_val, Ri: Ri_val, Th: 0, Z: 0}
    return np.array(F.evalf(30, subs=subs).tolist(), dtype=float)


class TestKinematics:
    def test_reference_gradient_is_identity(self):
        d = design("4")
        geom = DeformedGeometry.from_inner(d.inner_radius_Ri, 1.0, d)
        for R in np.linspace(d.inner_radius_Ri, d.outer_radius_Ro, 7):
            F = continuum.deformation_gradient(R, d.reference_state(), geom, d)
            np.testing.assert_allclose(F, np.eye(3), atol=1e-15)

    def test_sample6_matches_symbolic(self):
        d = design("6")
        lam, phi = 1.05, 0.8
        q = KinematicState(lam * d.length_L, phi)
        geom = continuum.solve_inner_radius(q, 30 * KPA, C_TRUE, d)
        R = 0.5 * (d.inner_radius_Ri + d.outer_radius_Ro)
        F = continuum.deformation_gradient(R, q, geom, d)
        F_sym = sympy_gradient(R, geom.inner_radius_ri, geom.stretch_lambda_z, phi, d.length_L,
                               d.inner_radius_Ri)
        np.testing.assert_allclose(F, F_sym, rtol=1e-13, atol=1e-15)

    def test_outside_wall_rejected(self):
        d = design("2")
        geom = DeformedGeometry.from_inner(d.inner_radius_Ri, 1.0, d)
        with pytest.raises(ValueError):
            continuum.deformation_gradient(0.5 * d.inner_radius_Ri, d.reference_state(), geom, d)
        with pytest.raises(ValueError):
            continuum.deformation_gradient(1.5 * d.outer_radius_Ro, d.reference_state(), geom, d)

    @pytest.mark.parametrize("sid", list(TABLE))
    def test_det_one_at_nodes(self, sid):
        d = design(sid)
        rng = np.random.default_rng(int(sid))
        x, _ = continuum.gauss_legendre()
        for _ in range(10):
            q = state(d, rng.uniform(-5, 5), rng.uniform(-120, 120))
            geom = continuum.solve_inner_radius(q, rng.uniform(0, 72.5) * KPA, C_TRUE, d)
            Ri, Ro = d.inner_radius_Ri, d.outer_radius_Ro
            for R in 0.5 * (Ri + Ro) + 0.5 * (Ro - Ri) * x:
                F = continuum.deformation_gradient(R, q, geom, d)
                assert abs(np.linalg.det(F) - 1) < 1e-12

    def test_radius_maps_invert(self):
        d = design("5")
        geom = DeformedGeometry.from_inner(0.0051, 0.97, d)
        R = np.linspace(d.inner_radius_Ri, d.outer_radius_Ro, 11)
        np.testing.assert_allclose(geom.reference_radius(geom.current_radius(R, d), d), R, rtol=1e-13)
        assert geom.current_radius(d.outer_radius_Ro, d) == pytest.approx(geom.outer_radius_ro, rel=1e-13)


class TestConstitutive:
    def test_identity(self):
        d = design("3")
        assert continuum.strain_energy(np.eye(3), C_TRUE, d) == 0.0
        np.testing.assert_allclose(continuum.extra_stress(np.eye(3), C_TRUE, d), C_TRUE.C1 * np.eye(3))

    @pytest.mark.parametrize("s", [0.8, 1.0, 1.1, 1.3])
    def test_fiber_stretch(self, s):
        d = design("5")
        a0 = continuum.fiber_direction(d)
        P = np.outer(a0, a0)
        F = s * P + (np.eye(3) - P) / math.sqrt(s)
        I1, I4 = continuum.invariants(F, d)
        assert I4 == pytest.approx(s * s, rel=1e-14)
        assert I1 == pytest.approx(s * s + 2 / s, rel=1e-14)
        iso = 0.5 * C_TRUE.C1 * (s * s + 2 / s - 3)
        aniso = 0.5 * C_TRUE.C2 * (s * s - 1) ** 2
        assert continuum.strain_energy(F, C_TRUE, d) == pytest.approx(iso + aniso, rel=1e-12, abs=1e-9)

    def test_energy_matches_eigen_oracle(self):
        rng = np.random.default_rng(8)
        d = design("7")
        a0 = continuum.fiber_direction(d)
        for _ in range(50):
            F = random_isochoric(rng)
            C = F.T @ F
            I1 = float(np.sum(np.linalg.eigvalsh(C)))
            I4 = float(a0 @ C @ a0)
            expected = 0.5 * C_TRUE.C1 * (I1 - 3) + 0.5 * C_TRUE.C2 * (I4 - 1) ** 2
            assert continuum.strain_energy(F, C_TRUE, d) == pytest.approx(expected, rel=1e-11, abs=1e-6)

    def test_stress_matches_energy_derivative(self):
        rng = np.random.default_rng(9)
        worst = 0.0
        for k in range(100):
            d = design(str(k % 8 + 1))
            p = MaterialParams(rng.uniform(1e4, 1e6), rng.uniform(1e4, 1e7))
            F = random_isochoric(rng)
            dPsi = np.zeros((3, 3))
            for i in range(3):
                for j in range(3):
                    h = 1e-6
                    E = np.zeros((3, 3))
                    E[i, j] = h
                    dPsi[i, j] = (continuum.strain_energy(F + E, p, d, check=False)
                                  - continuum.strain_energy(F - E, p, d, check=False)) / (2 * h)
            expected = dPsi @ F.T
            got = continuum.extra_stress(F, p, d)
            worst = max(worst, np.abs(got - expected).max() / np.abs(expected).max())
            np.testing.assert_allclose(got, got.T, rtol=1e-12, atol=1e-9 * np.abs(got).max())
        assert worst < 1e-5

    def test_rejects_compressible(self):
        with pytest.raises(ValueError):
            continuum.strain_energy(1.01 * np.eye(3), C_TRUE, design("1"))
        with pytest.raises(ValueError):
            continuum.extra_stress(1.01 * np.eye(3), C_TRUE, design("1"))

    def test_shift_cancels_in_radial_difference(self):
        F = random_isochoric(np.random.default_rng(1))
        S = continuum.extra_stress(F, C_TRUE, design("2"))
        for c in (-3e5, 7.0, 1e6):
            T = S + c * np.eye(3)
            assert T[0, 0] - T[1, 1] == pytest.approx(S[0, 0] - S[1, 1], rel=1e-9)

    @pytest.mark.parametrize("bad", [(0.0, 1.0), (1.0, 0.0), (-1.0, 1.0)])
    def test_material_positivity(self, bad):
        with pytest.raises(ValueError):
            MaterialParams(*bad)


class TestSolve:
    @pytest.mark.parametrize("sid", list(TABLE))
    def test_reference_equilibrium(self, sid):
        d = design(sid)
        geom = continuum.solve_inner_radius(d.reference_state(), 0.0, C_TRUE, d)
        assert geom.inner_radius_ri == pytest.approx(d.inner_radius_Ri, abs=1e-12)
        assert continuum.equilibrium_residual(d.inner_radius_Ri, d.reference_state(), 0.0, C_TRUE, d) \
            == pytest.approx(0.0, abs=1e-6)

    def test_volume_identity_and_bracket(self):
        rng = np.random.default_rng(2)
        for _ in range(40):
            d = design(str(rng.integers(1, 9)))
            q = state(d, rng.uniform(-5, 5), rng.uniform(-120, 120))
            P = rng.uniform(0, 72.5) * KPA
            geom = continuum.solve_inner_radius(q, P, C_TRUE, d)
            ri, ro = geom.inner_radius_ri, geom.outer_radius_ro
            Ri, Ro = d.inner_radius_Ri, d.outer_radius_Ro
            lhs = (ro * ro - ri * ri) * q.length_l
            assert lhs == pytest.approx((Ro * Ro - Ri * Ri) * d.length_L, rel=1e-12)
            assert 0.2 * Ri < ri < 5 * Ri
            g = lambda x: continuum.equilibrium_residual(x, q, P, C_TRUE, d)  # noqa: E731
            assert g(ri * (1 - 1e-6)) * g(ri * (1 + 1e-6)) < 0

    def test_sample6_matches_dense_oracle(self):
        d = design("6")
        q = state(d, 4, 80)
        P = 63.9 * KPA
        ri_dense = oracles.dense_solve(tuple(d.as_array()), q.length_l, q.twist_phi, P, 5e5, 1e6)
        assert ri_dense == pytest.approx(0.004862878239369254, abs=1e-11)  # frozen oracle value
        geom = continuum.solve_inner_radius(q, P, C_TRUE, d)
        assert geom.inner_radius_ri == pytest.approx(ri_dense, abs=1e-11)

    def test_stretch_guard(self):
        d = design("3")
        for lam in (0.5, 2.0, 0.3, 2.5):
            with pytest.raises(NoEquilibrium):
                continuum.solve_inner_radius(KinematicState(lam * d.length_L, 0.0), 0.0, C_TRUE, d)

    def test_no_sign_change(self):
        d = design("3")
        with pytest.raises(NoEquilibrium):
            continuum.solve_inner_radius(d.reference_state(), 1e9, C_TRUE, d)

    def test_negative_pressure(self):
        d = design("3")
        with pytest.raises(ValueError):
            continuum.solve_inner_radius(d.reference_state(), -1.0, C_TRUE, d)


class TestForces:
    @pytest.mark.parametrize("sid", list(TABLE))
    def test_reference_is_unloaded(self, sid):
        d = design(sid)
        tau = continuum.predict(d.reference_state(), 0.0, C_TRUE, d)
        # the root tolerance propagates as C1 * wall area * xtol / Ri
        area = math.pi * (d.outer_radius_Ro ** 2 - d.inner_radius_Ri ** 2)
        bound = 10 * C_TRUE.C1 * area * continuum.ROOT_XTOL / d.inner_radius_Ri
        assert abs(tau.axial_force_F) < bound
        assert abs(tau.axial_moment_M) < bound * d.outer_radius_Ro

    @pytest.mark.parametrize("P_kPa,F_ref,M_ref", [
        (37.3, 5.6404592441538774, -0.004810093722482107),
        (64.4, 4.424699748274164, -0.019710765180500377),
    ])
    def test_sample3_matches_dense_oracle(self, P_kPa, F_ref, M_ref):
        d = design("3")
        q = state(d, -5, 10)
        _, F, M = oracles.dense_forces(tuple(d.as_array()), q.length_l, q.twist_phi, P_kPa * KPA, 5e5, 1e6)
        # frozen oracle values guard the oracle itself
        assert F == pytest.approx(F_ref, rel=1e-9) and M == pytest.approx(M_ref, rel=1e-8)
        tau = continuum.predict(q, P_kPa * KPA, C_TRUE, d)
        assert tau.axial_force_F == pytest.approx(F, rel=1e-6)
        assert tau.axial_moment_M == pytest.approx(M, rel=1e-6)

    def test_untwisted_moment_comes_from_fibers(self):
        # without twist only the fiber term carries shear stress; it fades with C2
        d = design("3")
        q = state(d, -3, 0)
        M_full = continuum.predict(q, 60 * KPA, C_TRUE, d).axial_moment_M
        M_soft = continuum.predict(q, 60 * KPA, MaterialParams(5e5, 1e-3), d).axial_moment_M
        assert abs(M_full) > 1e-3
        assert abs(M_soft) < 1e-9 * abs(M_full) * 1e3

    def test_offset_hook_invariance(self):
        d = design("7")
        q = state(d, 2, -40)
        P = 50 * KPA
        geom = continuum.solve_inner_radius(q, P, C_TRUE, d)
        base = continuum.integrate_forces(geom, q, P, C_TRUE, d)
        for offset in (-1e5, 3.3e3, 2e6):
            shifted = continuum.integrate_forces(geom, q, P, C_TRUE, d, b_offset=offset)
            assert shifted.axial_force_F == pytest.approx(base.axial_force_F, rel=1e-10)
            assert shifted.axial_moment_M == pytest.approx(base.axial_moment_M, rel=1e-10)

    def test_boundary_tractions(self):
        d = design("5")
        q = state(d, 1, 30)
        P = 40 * KPA
        geom = continuum.solve_inner_radius(q, P, C_TRUE, d)
        st = continuum.wall_stress([geom.inner_radius_ri, geom.outer_radius_ro], geom, q, C_TRUE, d)
        assert st.sigma_rr[0] == pytest.approx(-P, rel=1e-9)
        assert st.sigma_rr[1] == 0.0

    @pytest.mark.parametrize("sid", ["1", "4", "8"])
    def test_quadrature_converged(self, sid):
        d = design(sid)
        q = state(d, -4, 60)
        P = 70 * KPA
        a = continuum.predict(q, P, C_TRUE, d, order=32)
        b = continuum.predict(q, P, C_TRUE, d, order=64)
        assert a.axial_force_F == pytest.approx(b.axial_force_F, rel=1e-8)
        assert a.axial_moment_M == pytest.approx(b.axial_moment_M, rel=1e-8)

    def test_mirror_symmetry(self):
        # reflecting the helix (gamma -> -gamma) with the twist negates M and keeps F
        d = design("4")
        n = 5
        rng = np.random.default_rng(3)
        l = d.length_L + rng.uniform(-4, 4, n) * MM
        phi = np.r_[0.0, rng.uniform(-1, 1, n - 1)]
        P = rng.uniform(0, 70e3, n)
        x, w = continuum.gauss_legendre()
        one = np.ones(n)
        args = (d.length_L * one, d.inner_radius_Ri * one, d.outer_radius_Ro * one)
        F1, M1, _, s1 = kernels.continuum_batch(d.gamma * one, *args, l, phi, P, 5e5, 1e6, x, w)
        F2, M2, _, s2 = kernels.continuum_batch(-d.gamma * one, *args, l, -phi, P, 5e5, 1e6, x, w)
        assert np.all(s1 == 0) and np.all(s2 == 0)
        np.testing.assert_allclose(F2, F1, rtol=1e-10)
        np.testing.assert_allclose(M2, -M1, rtol=1e-10)
        assert abs(M1[0]) > 0

    def test_batch_matches_pointwise(self):
        ds = bench.generate_synthetic(list(TABLE.items()), bench.ExperimentGrid((-5, 0, 3), (-120, -1, 50), (0, 72.5)),
                                      C_TRUE)
        F, M, ok = continuum.predict_arrays(ds.arrays, C_TRUE)
        assert ok.all()
        for i, r in enumerate(ds.records):
            tau = continuum.predict(r.state, r.pressure_P, C_TRUE, r.design)
            assert F[i] == pytest.approx(tau.axial_force_F, rel=1e-9, abs=1e-12)
            assert M[i] == pytest.approx(tau.axial_moment_M, rel=1e-9, abs=1e-12)

    def test_batch_flags_failures(self):
        d = design("2")
        a = RecordArrays(*(np.array([v, v]) for v in d.as_array()), np.array([d.length_L, 3 * d.length_L]),
                         np.zeros(2), np.array([0.0, 1e3]), np.zeros(2), np.zeros(2))
        F, M, ok = continuum.predict_arrays(a, C_TRUE)
        assert ok.tolist() == [True, False]
        assert np.isnan(F[1]) and np.isnan(M[1])


@pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")
def test_backends_agree():
    from freebench import _ckernels

    rng = np.random.default_rng(12)
    n = 200
    ds = [design(str(k)) for k in rng.integers(1, 9, n)]
    cols = [np.array([d.as_array()[j] for d in ds]) for j in range(4)]
    l = cols[1] + rng.uniform(-5, 5, n) * MM
    phi = rng.uniform(-2, 2, n)
    P = rng.uniform(0, 72.5e3, n)
    x, w = continuum.gauss_legendre()
    a = _ckernels.continuum_batch(*cols, l, phi, P, 5e5, 1e6, x, w)
    b = _pykernels.continuum_batch(*cols, l, phi, P, 5e5, 1e6, x, w)
    np.testing.assert_array_equal(a[3], b[3])
    for u, v in zip(a[:3], b[:3]):
        np.testing.assert_allclose(u, v, rtol=1e-10, atol=1e-14)


def test_python_backend_selected_by_env():
    import os
    import subprocess
    import sys

    code = ("from freebench import kernels, continuum, bench; from freebench.continuum import MaterialParams;"
            "d = dict(bench.table1_designs())['3'];"
            "a = bench.ExperimentGrid((-2,), (30,), (40,)).arrays(d);"
            "print(kernels.BACKEND, repr(float(continuum.predict_arrays(a, MaterialParams(5e5, 1e6))[0][0])))")
    env = dict(os.environ, FREEBENCH_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    backend, F = out.stdout.split()
    assert backend == "python"
    d = TABLE["3"]
    ref = continuum.predict(state(d, -2, 30), 40 * KPA, C_TRUE, d).axial_force_F
    assert float(F) == pytest.approx(ref, rel=1e-10)
