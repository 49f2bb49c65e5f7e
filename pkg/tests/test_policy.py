import numpy as np
import pytest
import torch

from crosslight.policy import (PolicyAgent, PolicyNet, load_checkpoint,
                               masked_distribution, policy_forward,
                               save_checkpoint)


def rand_state(rng):
    return rng.standard_normal((5, 12, 7)).astype(np.float32)


def test_probs_sum_to_one():
    torch.manual_seed(0)
    net = PolicyNet(n_phases=4)
    rng = np.random.default_rng(0)
    for _ in range(64):
        probs, value = policy_forward(net, rand_state(rng))
        assert probs.shape == (4,)
        assert abs(probs.sum() - 1.0) <= 1e-6
        assert np.isfinite(value)


def test_spatial_permutation_invariance():
    # permuting the 12 movement rows identically in every frame leaves the
    # output unchanged: no spatial positional encoding, mean pooling
    torch.manual_seed(1)
    rng = np.random.default_rng(1)
    for trial in range(5):
        net = PolicyNet(n_phases=3, d=32, heads=4, mlp_hidden=48)
        state = rand_state(rng)
        perm = rng.permutation(12)
        probs_a, value_a = policy_forward(net, state)
        probs_b, value_b = policy_forward(net, state[:, perm, :])
        assert np.max(np.abs(probs_a - probs_b)) <= 1e-6
        assert abs(value_a - value_b) <= 1e-5


def test_zeroed_policy_head_gives_uniform_distribution():
    torch.manual_seed(2)
    net = PolicyNet(n_phases=4)
    with torch.no_grad():
        net.policy_head.weight.zero_()
        net.policy_head.bias.zero_()
    rng = np.random.default_rng(3)
    probs, _ = policy_forward(net, rand_state(rng))
    assert probs == pytest.approx(np.full(4, 0.25), abs=1e-7)


def test_non_finite_output_raises():
    torch.manual_seed(3)
    net = PolicyNet(n_phases=2)
    with torch.no_grad():
        net.value_head.weight.fill_(float("nan"))
    rng = np.random.default_rng(4)
    with pytest.raises(FloatingPointError):
        policy_forward(net, rand_state(rng))


def test_masked_distribution_zeroes_infeasible():
    logits = torch.tensor([[1.0, 5.0, 2.0]])
    mask = torch.tensor([[True, False, True]])
    dist = masked_distribution(logits, mask)
    assert dist.probs[0, 1] == pytest.approx(0.0)
    assert float(dist.probs.sum()) == pytest.approx(1.0)


def test_agent_respects_feasibility_mask():
    torch.manual_seed(4)
    agent = PolicyAgent(PolicyNet(n_phases=4))
    rng = np.random.default_rng(5)
    state = rand_state(rng)
    mask = np.array([False, False, True, False])
    action, logp, value = agent.act(state, mask)
    assert action == 3
    assert logp == pytest.approx(0.0)  # single feasible action
    gen = torch.Generator().manual_seed(0)
    for _ in range(20):
        a, _, _ = agent.act(state, np.array([True, False, True, False]),
                            sample=True, generator=gen)
        assert a in (1, 3)


def test_checkpoint_round_trip(tmp_path):
    torch.manual_seed(5)
    net = PolicyNet(n_phases=3, d=16, heads=2, mlp_hidden=24)
    path = str(tmp_path / "net.npz")
    save_checkpoint(net, path)
    clone = load_checkpoint(path)
    assert clone.n_phases == 3 and clone.d == 16 and clone.heads == 2
    rng = np.random.default_rng(6)
    state = rand_state(rng)
    pa, va = policy_forward(net, state)
    pb, vb = policy_forward(clone, state)
    assert np.array_equal(pa, pb)
    assert va == vb


def test_checkpoint_rejects_unknown_schema(tmp_path):
    torch.manual_seed(6)
    net = PolicyNet(n_phases=2, d=16, heads=2, mlp_hidden=24)
    path = str(tmp_path / "net.npz")
    save_checkpoint(net, path)
    data = dict(np.load(path))
    data["schema"] = np.array([999])
    np.savez(path, **data)
    with pytest.raises(ValueError, match="schema"):
        load_checkpoint(path)
