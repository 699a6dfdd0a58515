import pathlib
import subprocess
import sys

import numpy as np
import pytest

from mptorder import (
    Dataset,
    OrderChain,
    SamplerConfig,
    balanced,
    full_uniform,
    load_constraints,
    load_eqn,
    reparam,
)
from mptorder._kernels import available_backends, get_backend
from mptorder.inference import sample_posterior

ROOT = pathlib.Path(__file__).resolve().parent.parent

needs_cython = pytest.mark.skipif(
    "cython" not in available_backends(),
    reason="compiled extension not built",
)


@pytest.fixture(scope="module")
def trials_setup():
    model = load_eqn(ROOT / "data" / "pair_clustering_trials.eqn")
    data = Dataset.load(ROOT / "data" / "surrogate_counts.csv")
    config = load_constraints(ROOT / "data" / "trials_constraints.txt")
    prior = reparam(model, config.chains, adjusted=True)
    return model, data, prior


def test_python_backend_always_available():
    assert "python" in available_backends()
    assert get_backend("python").backend_name == "python"
    assert get_backend("pyref").backend_name == "python"


def test_unknown_backend_rejected():
    with pytest.raises(ValueError):
        get_backend("fortran")


@needs_cython
class TestParity:
    def grids(self, model, prior, n=500):
        rng = np.random.default_rng(13)
        k = prior.n_working
        vs = rng.uniform(0.0, 1.0, size=(n, k))
        # salt in exact boundary and out-of-range rows
        vs[0] = 0.5
        vs[1, 0] = 0.0
        vs[2, 0] = 1.0
        vs[3, 0] = -0.25
        vs[4, 0] = 1.25
        return vs

    def test_elementwise_functions(self, trials_setup):
        model, data, prior = trials_setup
        flat = model.flat.as_tuple()
        wm = prior.working_map.as_tuple()
        y = data.aligned(model)
        coef = data.log_coefficient(model)
        vs = self.grids(model, prior)
        py, cy = get_backend("python"), get_backend("cython")

        th_py = py.v_to_theta_batch(wm, np.clip(vs, 0.0, 1.0))
        th_cy = cy.v_to_theta_batch(wm, np.clip(vs, 0.0, 1.0))
        assert np.max(np.abs(th_py - th_cy)) < 1e-13

        pr_py = py.log_prior_v_batch(wm, vs)
        pr_cy = cy.log_prior_v_batch(wm, vs)
        both_inf = np.isneginf(pr_py) & np.isneginf(pr_cy)
        assert np.array_equal(np.isneginf(pr_py), np.isneginf(pr_cy))
        assert np.max(np.abs(pr_py[~both_inf] - pr_cy[~both_inf])) < 1e-11

        cp_py = py.category_probs_batch(flat, th_py)
        cp_cy = cy.category_probs_batch(flat, th_cy)
        assert np.max(np.abs(cp_py - cp_cy)) < 1e-13

        ll_py = py.loglik_batch(flat, y, coef, th_py)
        ll_cy = cy.loglik_batch(flat, y, coef, th_cy)
        inf = np.isneginf(ll_py) & np.isneginf(ll_cy)
        assert np.array_equal(np.isneginf(ll_py), np.isneginf(ll_cy))
        assert np.max(np.abs(ll_py[~inf] - ll_cy[~inf])) < 1e-10

    def test_direct_balanced_prior_parity(self, pair_model):
        prior = balanced(pair_model, [OrderChain(("u", "c"), "A")])
        wm = prior.working_map.as_tuple()
        rng = np.random.default_rng(14)
        vs = rng.uniform(0.0, 1.0, size=(400, 3))
        py = get_backend("python").log_prior_v_batch(wm, vs)
        cy = get_backend("cython").log_prior_v_batch(wm, vs)
        assert np.array_equal(np.isneginf(py), np.isneginf(cy))
        finite = ~np.isneginf(py)
        assert finite.any() and (~finite).any()
        assert np.max(np.abs(py[finite] - cy[finite])) < 1e-12

    def test_sampler_draws_bit_identical(self, pair_model, pair_data):
        prior = reparam(pair_model, [OrderChain(("u", "c"), "A")])
        config = SamplerConfig(n_draws=400, warmup=200, n_chains=2, seed=31)
        posts = {
            name: sample_posterior(
                pair_model, pair_data, prior, config, kernels=get_backend(name)
            )
            for name in ("python", "cython")
        }
        assert np.array_equal(posts["python"].working, posts["cython"].working)
        assert np.array_equal(
            posts["python"].acceptance_by_chain, posts["cython"].acceptance_by_chain
        )
        assert np.array_equal(posts["python"].log_step, posts["cython"].log_step)

    def test_no_nan_from_boundary_states(self, trials_setup):
        model, data, prior = trials_setup
        wm = prior.working_map.as_tuple()
        flat = model.flat.as_tuple()
        vs = np.full((3, prior.n_working), 0.5)
        vs[1, :] = 1.0
        vs[2, 0] = np.nextafter(0.0, 1.0)
        for name in ("python", "cython"):
            impl = get_backend(name)
            lp = impl.log_prior_v_batch(wm, vs)
            th = impl.v_to_theta_batch(wm, np.clip(vs, 0.0, 1.0))
            ll = impl.loglik_batch(flat, data.aligned(model), 0.0, th)
            assert not np.isnan(lp).any()
            assert not np.isnan(ll).any()


def test_env_variable_selects_backend(tmp_path):
    code = (
        "from mptorder import _kernels; print(_kernels.impl.backend_name)"
    )
    for env_value, expected in (("python", "python"), ("numpy", "python")):
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            env={"PATH": "/usr/bin:/bin", "MPTORDER_BACKEND": env_value},
            cwd=str(tmp_path),
        )
        assert out.returncode == 0, out.stderr
        assert out.stdout.strip() == expected


def test_env_variable_bad_value_errors(tmp_path):
    out = subprocess.run(
        [sys.executable, "-c", "import mptorder._kernels"],
        capture_output=True,
        text=True,
        env={"PATH": "/usr/bin:/bin", "MPTORDER_BACKEND": "fortran"},
        cwd=str(tmp_path),
    )
    assert out.returncode != 0
    assert "fortran" in out.stderr
