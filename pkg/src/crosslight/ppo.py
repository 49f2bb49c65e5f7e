"""Clipped-surrogate policy optimization for the signal controller.

Rollouts come from a set of synchronously stepped environments (deterministic
given the config seed); transitions carry the feasibility mask that was active
when the action was sampled so importance ratios stay consistent. Advantages
use GAE; episode ends are time-limit truncations and bootstrap with V(s_T).
The total objective is -L_clip + value_coef * L_value, nothing else.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import torch

from .episode import TrafficEnv
from .policy import PolicyNet, masked_distribution


@dataclass
class PPOConfig:
    total_steps: int = 300_000
    n_envs: int = 30
    rollout_size: int = 3000          # transitions per update across all envs
    batch_size: int = 64
    epochs: int = 10
    clip_eps: float = 0.2
    value_coef: float = 0.5
    gamma: float = 0.99
    gae_lambda: float = 0.95
    lr_start: float = 1e-3
    max_grad_norm: float = 0.5
    reward_scale: float = 0.1   # training-side scaling; curves report raw rewards
    seed: int = 0
    d: int = 64
    heads: int = 4
    mlp_hidden: int = 128

    def __post_init__(self):
        if not (0.0 < self.clip_eps < 1.0):
            raise ValueError("clip_eps must be in (0, 1)")
        if not (0.0 < self.gamma <= 1.0 and 0.0 < self.gae_lambda <= 1.0):
            raise ValueError("gamma and gae_lambda must be in (0, 1]")
        if self.rollout_size % self.n_envs != 0:
            raise ValueError("rollout_size must divide evenly across envs")


def lr_at(config: PPOConfig, steps_done: int) -> float:
    progress = min(1.0, steps_done / config.total_steps)
    return config.lr_start * (1.0 - progress)


def gae_advantages(rewards, values, gamma: float, lam: float,
                   bootstrap: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Standard GAE over one contiguous segment; returns (advantages,
    bootstrap returns) with R_t = A_t + V_t."""
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must be equal length")
    n = len(rewards)
    adv = np.zeros(n)
    next_value = bootstrap
    running = 0.0
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


@dataclass
class Batch:
    states: torch.Tensor        # (B, 5, 12, 7)
    actions: torch.Tensor       # (B,) 0-based
    old_log_probs: torch.Tensor
    advantages: torch.Tensor
    returns: torch.Tensor
    masks: torch.Tensor         # (B, P) bool


def ppo_losses(net: PolicyNet, batch: Batch, config: PPOConfig
               ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """(policy surrogate, value loss, total). The surrogate is the quantity
    being maximized; total = -surrogate + value_coef * value_loss."""
    if batch.states.shape[0] == 0:
        raise ValueError("empty batch")
    logits, values = net(batch.states)
    dist = masked_distribution(logits, batch.masks)
    log_probs = dist.log_prob(batch.actions)
    ratio = torch.exp(log_probs - batch.old_log_probs)
    unclipped = ratio * batch.advantages
    clipped = torch.clamp(ratio, 1.0 - config.clip_eps,
                          1.0 + config.clip_eps) * batch.advantages
    policy_loss = torch.min(unclipped, clipped).mean()
    value_loss = ((values - batch.returns) ** 2).mean()
    total = -policy_loss + config.value_coef * value_loss
    if not torch.isfinite(total):
        raise FloatingPointError("non-finite PPO loss")
    return policy_loss, value_loss, total


@dataclass
class TrainResult:
    net: PolicyNet
    reward_curve: list[tuple[int, float]] = field(default_factory=list)

    def write_curve(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["update", "mean_reward"])
            for idx, r in self.reward_curve:
                w.writerow([idx, repr(r)])


class _EnvSlot:
    __slots__ = ("env", "state", "mask")

    def __init__(self, env: TrafficEnv):
        self.env = env
        self.state, self.mask = env.reset()


def train(env_factory, n_phases: int, config: PPOConfig,
          progress: bool = False) -> TrainResult:
    """Run PPO until config.total_steps environment decisions are consumed.

    env_factory(i) must build the i-th training environment, seeded from i so
    distinct slots explore different arrival streams. Fully deterministic for
    a fixed config.
    """
    torch.manual_seed(config.seed)
    torch.set_num_threads(1)
    net = PolicyNet(n_phases, d=config.d, heads=config.heads,
                    mlp_hidden=config.mlp_hidden)
    optimizer = torch.optim.Adam(net.parameters(), lr=config.lr_start)
    sample_gen = torch.Generator().manual_seed(config.seed + 1)

    slots = [_EnvSlot(env_factory(i)) for i in range(config.n_envs)]
    per_env = config.rollout_size // config.n_envs
    steps_done = 0
    update_idx = 0
    result = TrainResult(net=net)

    while steps_done < config.total_steps:
        # -- collect one rollout round -------------------------------------
        states = np.empty((config.n_envs, per_env, 5, 12, 7), dtype=np.float32)
        masks = np.empty((config.n_envs, per_env, n_phases), dtype=bool)
        actions = np.empty((config.n_envs, per_env), dtype=np.int64)
        log_probs = np.empty((config.n_envs, per_env), dtype=np.float32)
        rewards = np.empty((config.n_envs, per_env), dtype=np.float64)
        values = np.empty((config.n_envs, per_env), dtype=np.float64)
        dones = np.zeros((config.n_envs, per_env), dtype=bool)
        # V(s_next) per step: the GAE bootstrap for whichever step ends its
        # segment (episode truncation mid-rollout, or the rollout tail)
        next_values = np.zeros((config.n_envs, per_env), dtype=np.float64)

        with torch.no_grad():
            for t in range(per_env):
                batch_states = torch.as_tensor(
                    np.stack([s.state for s in slots]), dtype=torch.float32)
                batch_masks = torch.as_tensor(np.stack([s.mask for s in slots]))
                logits, vals = net(batch_states)
                dist = masked_distribution(logits, batch_masks)
                acts = torch.multinomial(dist.probs, 1, generator=sample_gen).squeeze(-1)
                lps = dist.log_prob(acts)
                for i, slot in enumerate(slots):
                    states[i, t] = slot.state
                    masks[i, t] = slot.mask
                    a = int(acts[i])
                    actions[i, t] = a
                    log_probs[i, t] = float(lps[i])
                    values[i, t] = float(vals[i])
                    nxt_state, reward, done, nxt_mask = slot.env.step(a + 1)
                    rewards[i, t] = reward
                    dones[i, t] = done
                    if done:
                        # time-limit truncation: bootstrap with V of the final
                        # observation, then start the next episode
                        _, v_final = net(torch.as_tensor(
                            nxt_state, dtype=torch.float32).unsqueeze(0))
                        next_values[i, t] = float(v_final)
                        slot.state, slot.mask = slot.env.reset()
                    else:
                        slot.state, slot.mask = nxt_state, nxt_mask
            for i, slot in enumerate(slots):
                if not dones[i, per_env - 1]:
                    _, v_last = net(torch.as_tensor(
                        slot.state, dtype=torch.float32).unsqueeze(0))
                    next_values[i, per_env - 1] = float(v_last)

        scaled = rewards * config.reward_scale
        advantages = np.empty_like(rewards)
        returns = np.empty_like(rewards)
        for i in range(config.n_envs):
            seg_start = 0
            boundaries = list(np.nonzero(dones[i])[0] + 1)
            if not boundaries or boundaries[-1] != per_env:
                boundaries.append(per_env)
            for seg_end in boundaries:
                adv, ret = gae_advantages(
                    scaled[i, seg_start:seg_end], values[i, seg_start:seg_end],
                    config.gamma, config.gae_lambda,
                    bootstrap=next_values[i, seg_end - 1])
                advantages[i, seg_start:seg_end] = adv
                returns[i, seg_start:seg_end] = ret
                seg_start = seg_end

        steps_done += config.rollout_size
        update_idx += 1
        mean_reward = float(rewards.mean())
        result.reward_curve.append((update_idx, mean_reward))
        if progress:
            print(f"update {update_idx}: steps={steps_done} "
                  f"mean_reward={mean_reward:.3f}")

        flat_states = torch.as_tensor(states.reshape(-1, 5, 12, 7), dtype=torch.float32)
        flat_masks = torch.as_tensor(masks.reshape(-1, n_phases))
        flat_actions = torch.as_tensor(actions.reshape(-1))
        flat_logp = torch.as_tensor(log_probs.reshape(-1), dtype=torch.float32)
        flat_adv = torch.as_tensor(advantages.reshape(-1), dtype=torch.float32)
        flat_ret = torch.as_tensor(returns.reshape(-1), dtype=torch.float32)
        flat_adv = (flat_adv - flat_adv.mean()) / (flat_adv.std() + 1e-8)

        lr = lr_at(config, steps_done)
        for group in optimizer.param_groups:
            group["lr"] = lr

        n = flat_states.shape[0]
        perm_gen = torch.Generator().manual_seed(config.seed + 1000 + update_idx)
        for _ in range(config.epochs):
            order = torch.randperm(n, generator=perm_gen)
            for start in range(0, n, config.batch_size):
                idx = order[start:start + config.batch_size]
                batch = Batch(
                    states=flat_states[idx],
                    actions=flat_actions[idx],
                    old_log_probs=flat_logp[idx],
                    advantages=flat_adv[idx],
                    returns=flat_ret[idx],
                    masks=flat_masks[idx],
                )
                _, _, total = ppo_losses(net, batch, config)
                optimizer.zero_grad()
                total.backward()
                torch.nn.utils.clip_grad_norm_(net.parameters(), config.max_grad_norm)
                optimizer.step()

    return result
