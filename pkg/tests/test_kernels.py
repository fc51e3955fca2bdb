import mpmath
import numpy as np
import pytest

from pairkin.kernels import _numpy, available_backends

try:
    from pairkin.kernels import _core
except ImportError:
    _core = None

needs_compiled = pytest.mark.skipif(_core is None, reason="compiled kernels not built")


def random_inputs(rng, nc=48, nv=24):
    chi = np.ascontiguousarray(0.1 + rng.random(nv))
    w = np.ascontiguousarray(0.05 + 0.2 * rng.random(nv))
    f = np.ascontiguousarray((0.5 + rng.random((nc, nv))) * chi)
    g = np.ascontiguousarray((0.5 + rng.random((nc, nv))) * chi)
    rho1 = np.ascontiguousarray(f @ w)
    rho2 = np.ascontiguousarray(g @ w)
    lam = np.ascontiguousarray(np.exp(-rng.random(nc)))
    return f, g, chi, w, rho1, rho2, lam


@needs_compiled
class TestBackendParity:
    def test_reductions_agree(self, rng):
        f, g, chi, w, rho1, rho2, lam = random_inputs(rng)
        pairs = [
            ("entropy_sum", (f, chi, w, 1.3)),
            ("d12_sum", (f, rho1, chi, w)),
            ("d3_sum", (f, g, rho1, rho2, chi, chi, w)),
            ("weighted_dot", (f, g, chi, w)),
        ]
        for name, args in pairs:
            a = getattr(_numpy, name)(*args)
            b = getattr(_core, name)(*args)
            assert b == pytest.approx(a, rel=1e-12), name

    def test_relax_update_agrees(self, rng):
        f, g, chi, w, rho1, rho2, lam = random_inputs(rng)
        fa, fb = f.copy(), f.copy()
        _numpy.relax_update(fa, chi, rho2, rho1, lam)
        _core.relax_update(fb, chi, rho2, rho1, lam)
        assert np.allclose(fa, fb, rtol=1e-13, atol=1e-15)

    def test_ratio_extrema_agree(self, rng):
        f, g, chi, *_ = random_inputs(rng)
        assert _core.ratio_extrema(f, chi) == pytest.approx(_numpy.ratio_extrema(f, chi))


@pytest.mark.parametrize("impl", [_numpy] + ([_core] if _core is not None else []),
                         ids=lambda m: m.__name__.rsplit(".", 1)[-1])
class TestKernelMath:
    def test_entropy_integrand_matches_mpmath(self, impl):
        # single-entry arrays isolate phi(u) = u ln u - u + 1
        mpmath.mp.dps = 40
        offsets = [1.0, -0.5, 1e-3, -1e-3, 1e-5, 1e-8, -1e-8, 1e-12]
        for off in offsets:
            u = 1.0 + off
            f = np.array([[u]])
            chi = np.array([1.0])
            w = np.array([1.0])
            got = impl.entropy_sum(f, chi, w, 1.0)
            exact = float(mpmath.mpf(u) * mpmath.log(mpmath.mpf(u)) - mpmath.mpf(u) + 1)
            assert got == pytest.approx(exact, rel=1e-12, abs=1e-30)

    def test_d12_integrand_matches_mpmath(self, impl):
        mpmath.mp.dps = 40
        for u in (2.0, 0.5, 1.0 + 1e-6, 1.0 - 1e-6):
            f = np.array([[u]])
            one = np.array([1.0])
            got = impl.d12_sum(f, one, one, one)
            exact = float((mpmath.mpf(u) - 1) * mpmath.log(mpmath.mpf(u)))
            assert got == pytest.approx(exact, rel=1e-12, abs=1e-30)

    def test_relax_update_formula(self, impl, rng):
        f, g, chi, w, rho1, rho2, lam = random_inputs(rng, nc=8, nv=6)
        expected = rho2[:, None] * chi + lam[:, None] * (f - rho1[:, None] * chi)
        out = f.copy()
        impl.relax_update(out, chi, rho2, rho1, lam)
        assert np.allclose(out, expected, rtol=1e-14, atol=1e-16)

    def test_relax_update_moments_are_inherited(self, impl, rng):
        # the update must hand the new densities to the state exactly
        f, g, chi, w, rho1, rho2, lam = random_inputs(rng)
        out = f.copy()
        impl.relax_update(out, chi, rho2, rho1, lam)
        # recompute with the same quadrature the kernel's macros refer to
        swc = float(np.sum(w * chi))
        expected = rho2 * swc + lam * (f @ w - rho1 * swc)
        assert np.allclose(out @ w, expected, rtol=1e-13, atol=1e-15)

    def test_ratio_extrema_matches_numpy(self, impl, rng):
        f, g, chi, *_ = random_inputs(rng)
        lo, hi = impl.ratio_extrema(f, chi)
        r = f / chi
        assert lo == pytest.approx(float(r.min()), rel=1e-15)
        assert hi == pytest.approx(float(r.max()), rel=1e-15)

    def test_weighted_dot_small_case(self, impl):
        f = np.array([[1.0, 2.0], [3.0, 4.0]])
        g = np.array([[5.0, 6.0], [7.0, 8.0]])
        chi = np.array([1.0, 2.0])
        w = np.array([0.5, 0.25])
        expected = 0.5 * (5.0 + 21.0) + 0.25 / 2.0 * (12.0 + 32.0)
        assert impl.weighted_dot(f, g, chi, w) == pytest.approx(expected, rel=1e-15)


def test_backend_listing():
    names = available_backends()
    assert "numpy" in names
    if _core is not None:
        assert names[0] == "compiled"
