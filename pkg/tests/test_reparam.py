import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mptorder import (
    ConstraintError,
    OrderChain,
    check_chains,
    parse_constraints,
    product_binomial_model,
    rejection_sample_cone,
)

from conftest import ks_threshold


def chain_of(p, method):
    return OrderChain(tuple(f"th{i}" for i in range(1, p + 1)), method)


interior = st.floats(min_value=0.01, max_value=0.99, allow_nan=False)


class TestRoundTrip:
    @settings(max_examples=150, deadline=None)
    @given(
        st.integers(min_value=1, max_value=6),
        st.data(),
        st.sampled_from(["A", "B"]),
    )
    def test_theta_eta_theta(self, p, data, method):
        theta = np.sort(data.draw(st.lists(interior, min_size=p, max_size=p)))
        chain = chain_of(p, method)
        eta = chain.to_auxiliary(theta)
        assert eta.shape == (p,)
        assert np.all((eta >= 0.0) & (eta <= 1.0))
        back = chain.from_auxiliary(eta)
        assert np.max(np.abs(back - theta)) <= 1e-12

    @settings(max_examples=150, deadline=None)
    @given(
        st.integers(min_value=1, max_value=6),
        st.data(),
        st.sampled_from(["A", "B"]),
    )
    def test_eta_theta_eta(self, p, data, method):
        eta = np.array(data.draw(st.lists(interior, min_size=p, max_size=p)))
        chain = chain_of(p, method)
        theta = chain.from_auxiliary(eta)
        assert np.all(np.diff(theta) >= -1e-15)
        assert chain.holds(np.sort(theta))
        back = chain.to_auxiliary(theta)
        # recovering eta through theta cancels catastrophically once theta
        # saturates near 0 or 1, so this direction gets a looser bound
        assert np.max(np.abs(back - eta)) <= 1e-9

    def test_unsorted_theta_rejected(self):
        with pytest.raises(ValueError):
            chain_of(3, "A").to_auxiliary([0.5, 0.2, 0.9])

    def test_out_of_range_rejected(self):
        with pytest.raises(ValueError):
            chain_of(2, "A").from_auxiliary([0.5, 1.5])


class TestBoundaries:
    def test_method_a_zero_convention(self):
        eta = chain_of(3, "A").to_auxiliary([0.0, 0.0, 0.5])
        assert eta[0] == 1.0
        assert eta[1] == 0.0
        assert eta[2] == 0.5

    def test_method_b_one_convention(self):
        eta = chain_of(3, "B").to_auxiliary([0.4, 1.0, 1.0])
        assert eta[0] == pytest.approx(0.4)
        assert eta[1] == 1.0
        assert eta[2] == 0.0

    def test_p1_identity(self):
        for method in ("A", "B"):
            chain = OrderChain(("th1",), method)
            assert chain.to_auxiliary([0.3])[0] == pytest.approx(0.3)
            assert chain.from_auxiliary([0.3])[0] == pytest.approx(0.3)
            assert chain.log_jacobian_det([0.3]) == 0.0


class TestJacobian:
    def test_pinned_values(self):
        eta = [0.5, 0.5, 0.5]
        assert chain_of(3, "A").log_jacobian_det(eta) == pytest.approx(
            3 * math.log(0.5), abs=1e-12
        )
        assert chain_of(3, "B").log_jacobian_det(eta) == pytest.approx(
            3 * math.log(0.5), abs=1e-12
        )

    def test_matches_numerical_determinant(self):
        rng = np.random.default_rng(11)
        h = 1e-6
        for p in range(2, 7):
            for method in ("A", "B"):
                chain = chain_of(p, method)
                for _ in range(10):
                    eta = rng.uniform(0.05, 0.95, size=p)
                    jac = np.empty((p, p))
                    for j in range(p):
                        up, dn = eta.copy(), eta.copy()
                        up[j] += h
                        dn[j] -= h
                        jac[:, j] = (
                            chain.from_auxiliary(up) - chain.from_auxiliary(dn)
                        ) / (2 * h)
                    sign, logdet = np.linalg.slogdet(jac)
                    assert sign == 1.0
                    assert chain.log_jacobian_det(eta) == pytest.approx(
                        logdet, rel=1e-6, abs=1e-9
                    )


class TestAdjustedPrior:
    def test_method_a_shapes(self):
        assert chain_of(3, "A").adjusted_prior() == (
            (1.0, 1.0),
            (2.0, 1.0),
            (3.0, 1.0),
        )

    def test_method_b_shapes(self):
        assert chain_of(3, "B").adjusted_prior() == (
            (1.0, 3.0),
            (1.0, 2.0),
            (1.0, 1.0),
        )

    def test_pushforward_matches_cone_rejection(self):
        p, n = 3, 50000
        cone, _ = rejection_sample_cone(p, n, seed=21)
        rng = np.random.default_rng(22)
        crit = 2 * ks_threshold(n)  # two-sample, equal sizes
        for method in ("A", "B"):
            chain = chain_of(p, method)
            shapes = np.array(chain.adjusted_prior())
            eta = rng.beta(shapes[:, 0], shapes[:, 1], size=(n, p))
            theta = np.array([chain.from_auxiliary(e) for e in eta])
            for i in range(p):
                a = np.sort(theta[:, i])
                b = np.sort(cone[:, i])
                grid = np.concatenate([a, b])
                fa = np.searchsorted(a, grid, side="right") / n
                fb = np.searchsorted(b, grid, side="right") / n
                assert np.abs(fa - fb).max() < crit


class TestParseConstraints:
    def test_basic(self):
        config = parse_constraints(
            "# comment\norder(A): a < b <= c\norder(B): d < e\nprior: f Beta(2.5, 2)\n"
        )
        assert len(config.chains) == 2
        assert config.chains[0].parameters == ("a", "b", "c")
        assert config.chains[0].method == "A"
        assert config.chains[1].method == "B"
        assert config.beta_map == {"f": (2.5, 2.0)}

    def test_duplicate_parameter_across_chains(self):
        with pytest.raises(ValueError):
            parse_constraints("order(A): a < b\norder(A): b < c\n")

    def test_duplicate_within_chain(self):
        with pytest.raises(ConstraintError):
            parse_constraints("order(A): a < b < a\n")

    def test_single_name_chain_is_identity(self):
        config = parse_constraints("order(A): a\n")
        assert len(config.chains[0]) == 1

    def test_empty_name_rejected(self):
        with pytest.raises(ConstraintError) as err:
            parse_constraints("order(A): a < \n")
        assert err.value.line == 1

    def test_unknown_directive(self):
        with pytest.raises(ConstraintError) as err:
            parse_constraints("ordering: a < b\n")
        assert err.value.line == 1

    def test_bad_method(self):
        with pytest.raises(ConstraintError):
            parse_constraints("order(C): a < b\n")

    def test_bad_beta(self):
        with pytest.raises(ConstraintError):
            parse_constraints("prior: f Beta(0, 2)\n")

    def test_duplicate_beta(self):
        with pytest.raises(ConstraintError):
            parse_constraints("prior: f Beta(2, 2)\nprior: f Beta(3, 3)\n")

    def test_with_method_override(self):
        config = parse_constraints("order(A): a < b\norder(B): c < d\n")
        flipped = config.with_method("B")
        assert all(c.method == "B" for c in flipped.chains)
        assert flipped.betas == config.betas

    def test_check_chains_unknown_parameter(self):
        model = product_binomial_model(2)
        with pytest.raises(ValueError):
            check_chains(model, [OrderChain(("th1", "nope"), "A")])

    def test_check_chains_overlap(self):
        model = product_binomial_model(3)
        with pytest.raises(ValueError):
            check_chains(
                model,
                [
                    OrderChain(("th1", "th2"), "A"),
                    OrderChain(("th2", "th3"), "A"),
                ],
            )


class TestHolds:
    def test_holds(self):
        chain = chain_of(3, "A")
        assert chain.holds([0.1, 0.5, 0.9])
        assert chain.holds([0.5, 0.5, 0.9])
        assert not chain.holds([0.6, 0.5, 0.9])
