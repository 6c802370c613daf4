import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pareto_forge.errors import DomainError, NumericError
from pareto_forge.growl import growl_spike
from pareto_forge.moo import ALState, ScalarizationConfig
from pareto_forge.net import (
    SGD,
    Adam,
    MTLSpec,
    MultiTaskNet,
    ParamStore,
    accuracies,
    forward_hps,
    forward_mdmtn,
    hps_params_from_mdmtn,
    make_optimizer,
    scalarized_objective,
    task_losses,
)


def batch(rng, spec, n=12):
    X = rng.normal(size=(n, spec.n_inputs))
    Y = [rng.integers(0, c, n) for c in spec.n_classes]
    return X, Y


class TestSpec:
    def test_monitor_width_must_match_trunk(self):
        with pytest.raises(DomainError, match="monitor output width"):
            MTLSpec(shared=(16, 8), monitors=(4,))

    @pytest.mark.parametrize("kwargs", [{"kind": "cnn"}, {"n_classes": (1, 3)}, {"shared": ()},
                                        {"monitors": (8, 8, 32)}])
    def test_invalid(self, kwargs):
        with pytest.raises(DomainError):
            MTLSpec(**kwargs)

    def test_json_roundtrip(self):
        spec = MTLSpec(n_classes=(3, 5))
        assert MTLSpec.from_json(spec.to_json()) == spec


class TestLayout:
    def test_roles_and_growl_flags(self, small_spec):
        net = MultiTaskNet(small_spec)
        info = {p.name: p for p in net.infos}
        assert info["shared.0.W"].role == "input" and not info["shared.0.W"].growl
        assert info["monitor0.0.W"].role == "input" and not info["monitor0.0.W"].growl
        assert info["shared.1.W"].growl
        assert info["head0.0.W"].growl
        assert not info["head0.1.W"].growl  # final classification layer
        assert not info["shared.1.b"].growl and not info["alpha0"].growl
        assert info["alpha1"].role == "fusion" and info["alpha1"].task == 1

    def test_rows_are_previous_layer_neurons(self, small_spec):
        net = MultiTaskNet(small_spec)
        shapes = {p.name: p.shape for p in net.infos}
        assert shapes["shared.0.W"] == (6, 8)
        assert shapes["head1.0.W"] == (6, 5)

    def test_offsets_are_contiguous(self, small_spec):
        infos = MultiTaskNet(small_spec).infos
        offsets = np.cumsum([0] + [p.size for p in infos])
        assert [p.offset for p in infos] == list(offsets[:-1])

    def test_store_views_share_memory(self, small_spec):
        params = MultiTaskNet(small_spec).new_params(0)
        params["alpha0"] = [0.25, 0.75]
        assert params.flat[params.slice_of("alpha0")].tolist() == [0.25, 0.75]

    def test_store_rejects_wrong_length(self, small_spec):
        with pytest.raises(DomainError):
            ParamStore(MultiTaskNet(small_spec).infos, np.zeros(3))


class TestForward:
    def test_mdmtn_with_alpha_one_zero_equals_hps(self, small_spec, rng):
        mdmtn = MultiTaskNet(small_spec)
        hps = MultiTaskNet(small_spec.as_hps())
        params = mdmtn.new_params(3)
        for i in range(small_spec.n_tasks):
            params[f"alpha{i}"] = [1.0, 0.0]
        X, _ = batch(rng, small_spec)
        a = forward_mdmtn(mdmtn, params, X)
        b = forward_hps(hps, hps_params_from_mdmtn(mdmtn, hps, params), X)
        for za, zb in zip(a, b):
            np.testing.assert_array_equal(za, zb)

    def test_wrong_input_width(self, small_spec):
        net = MultiTaskNet(small_spec)
        with pytest.raises(DomainError):
            net.forward(net.new_params(0), np.zeros((2, 5)))

    def test_forward_helpers_check_kind(self, small_spec):
        net = MultiTaskNet(small_spec)
        with pytest.raises(DomainError):
            forward_hps(net, net.new_params(0), np.zeros((1, 6)))

    def test_lsuv_unit_variance(self, small_spec, rng):
        net = MultiTaskNet(small_spec)
        probe = rng.normal(size=(256, 6))
        params = net.lsuv_init(probe, seed=1)
        for layer in net._layers_in_order():
            assert abs(net._preactivation_var(params, probe, layer) - 1.0) < 0.05

    def test_lsuv_rejects_constant_probe(self, small_spec):
        with pytest.raises(DomainError):
            MultiTaskNet(small_spec).lsuv_init(np.ones((10, 6)))


class TestLosses:
    def test_uniform_logits(self):
        L = task_losses([np.zeros((4, 5))], [np.array([0, 1, 2, 3])])
        assert L[0] == pytest.approx(np.log(5))

    def test_gradient_matches_finite_differences(self, rng):
        z = rng.normal(size=(3, 4))
        y = np.array([0, 3, 1])
        _, (g,) = task_losses([z], [y], with_grad=True)
        h = 1e-6
        for idx in np.ndindex(z.shape):
            zp, zm = z.copy(), z.copy()
            zp[idx] += h
            zm[idx] -= h
            fd = (task_losses([zp], [y])[0] - task_losses([zm], [y])[0]) / (2 * h)
            assert g[idx] == pytest.approx(fd, abs=1e-8)

    def test_label_range(self):
        with pytest.raises(DomainError):
            task_losses([np.zeros((2, 3))], [np.array([0, 3])])

    def test_accuracies(self):
        z = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_array_equal(accuracies([z], [np.array([0, 0])]), [0.5])


class TestScalarizedObjective:
    @pytest.mark.parametrize("literal", [False, True])
    def test_gradient_check(self, small_spec, rng, literal):
        net = MultiTaskNet(small_spec)
        X, Y = batch(rng, small_spec, 10)
        params = net.lsuv_init(X, seed=1)
        params.flat[:] += 0.1 * rng.normal(size=len(params))
        thetas = {n: growl_spike(0.3, 0.1, params[n].shape[0]) for n in params.growl_names()}
        cfg = ScalarizationConfig(np.array([0.2, 0.4, 0.4]), np.zeros(3))
        state = ALState(t=0.5, lam=np.array([0.3, 0.1, 0.2]), mu=2.0)
        terms = scalarized_objective(net, params, 0.5, X, Y, cfg, state, thetas, literal=literal)

        def value(flat, t=0.5):
            return scalarized_objective(net, ParamStore(params.infos, flat), t, X, Y, cfg, state,
                                        thetas, with_grad=False, literal=literal).value

        h = 1e-6
        for j in rng.choice(len(params), 60, replace=False):
            fp, fm = params.flat.copy(), params.flat.copy()
            fp[j] += h
            fm[j] -= h
            fd = (value(fp) - value(fm)) / (2 * h)
            an = terms.grad.flat[j]
            assert abs(fd - an) <= 1e-4 * max(abs(fd), abs(an), 1e-6)
        fd_t = (value(params.flat, 0.5 + h) - value(params.flat, 0.5 - h)) / (2 * h)
        assert terms.grad_t == pytest.approx(fd_t, rel=1e-5)

    def test_growl_term_is_objective_zero(self, small_spec, rng):
        net = MultiTaskNet(small_spec)
        X, Y = batch(rng, small_spec)
        params = net.new_params(0)
        thetas = {n: growl_spike(1.0, 1.0, params[n].shape[0]) for n in params.growl_names()}
        cfg = ScalarizationConfig(np.array([0.0, 0.5, 0.5]), np.zeros(3))
        terms = scalarized_objective(net, params, 1.0, X, Y, cfg, ALState.initial(3, 1.0), thetas,
                                     with_grad=False)
        expected = sum(np.sort(np.linalg.norm(params[n], axis=1))[::-1] @ th for n, th in thetas.items())
        assert terms.L[0] == pytest.approx(expected)

    def test_prox_mode_leaves_growl_out_of_the_gradient(self, small_spec, rng):
        from pareto_forge.growl import growl_penalty_grad

        net = MultiTaskNet(small_spec)
        X, Y = batch(rng, small_spec)
        params = net.new_params(1)
        thetas = {n: growl_spike(0.5, 0.2, params[n].shape[0]) for n in params.growl_names()}
        cfg = ScalarizationConfig(np.array([0.3, 0.35, 0.35]), np.zeros(3))
        state = ALState(t=0.2, lam=np.array([0.4, 0.1, 0.1]), mu=1.0)
        full = scalarized_objective(net, params, 0.2, X, Y, cfg, state, thetas)
        prox = scalarized_objective(net, params, 0.2, X, Y, cfg, state, thetas, growl_grad=False)
        assert prox.value == full.value and prox.dL[0] == full.dL[0] != 0
        for name, theta in thetas.items():
            np.testing.assert_allclose(full.grad[name] - prox.grad[name],
                                       full.dL[0] * growl_penalty_grad(params[name], theta),
                                       atol=1e-12)

    def test_nonfinite_gradient_names_layer(self, small_spec, rng):
        net = MultiTaskNet(small_spec)
        X, _ = batch(rng, small_spec)
        params = net.new_params(0)
        cache = {}
        logits = net.forward(params, X, cache)
        bad = [np.full_like(z, np.nan) for z in logits]
        with pytest.raises(NumericError, match="non-finite gradient in"):
            net.backward(params, cache, bad)


class TestOptimizers:
    def test_adam_first_step_is_lr_times_sign(self):
        x = np.array([1.0, -2.0, 0.5])
        g = np.array([3.0, -0.01, 1e3])
        Adam(lr=0.1).step(x, g)
        np.testing.assert_allclose(x, [0.9, -1.9, 0.4], atol=1e-6)

    def test_adam_matches_reference_recursion(self, rng):
        x = rng.normal(size=4)
        ref = x.copy()
        opt = Adam(lr=0.01, beta1=0.8, beta2=0.9)
        m = v = np.zeros(4)
        for t in range(1, 6):
            g = rng.normal(size=4)
            opt.step(x, g)
            m = 0.8 * m + 0.2 * g
            v = 0.9 * v + 0.1 * g * g
            ref = ref - 0.01 * (m / (1 - 0.8 ** t)) / (np.sqrt(v / (1 - 0.9 ** t)) + 1e-8)
        np.testing.assert_allclose(x, ref, rtol=1e-12)

    @given(st.floats(0.0, 0.95))
    def test_sgd_momentum_recursion(self, mom):
        x = np.zeros(2)
        opt = SGD(lr=0.5, momentum=mom)
        opt.step(x, np.array([1.0, 2.0]))
        opt.step(x, np.array([1.0, 2.0]))
        np.testing.assert_allclose(x, -0.5 * (2 + mom) * np.array([1.0, 2.0]))

    def test_adam_minimizes_quadratic(self):
        x = np.array([3.0, -4.0])
        opt = Adam(lr=0.05)
        for _ in range(2000):
            opt.step(x, 2 * x)
        np.testing.assert_allclose(x, 0.0, atol=1e-3)

    def test_factory(self):
        assert isinstance(make_optimizer("sgd", 0.1), SGD)
        with pytest.raises(DomainError):
            make_optimizer("rmsprop", 0.1)

    def test_shape_mismatch(self):
        with pytest.raises(DomainError):
            Adam().step(np.zeros(2), np.zeros(3))
