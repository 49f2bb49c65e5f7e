"""Policy/value network over the stacked movement-feature tensor.

Architecture: a shared linear embedding lifts each 7-component movement row
to d dimensions; one encoder block mixes the 12 movement tokens per frame
(no positional encoding there, so the policy is invariant to movement-row
permutations); mean pooling gives one token per frame; a second encoder block
with a learned temporal position embedding mixes the five frame tokens, and a
final mean pool feeds the phase-logit and value heads.

Each encoder block follows: x -> x + MSA(LN(x)) -> MLP(LN(.)). Checkpoints
are plain npz archives with a small header (schema, sizes) plus the flat
parameter arrays.
"""

from __future__ import annotations

import numpy as np
import torch
import torch.nn as nn

from .features import N_FEATURES, N_FRAMES, N_MOVEMENT_SLOTS

CHECKPOINT_SCHEMA = 1


class EncoderBlock(nn.Module):
    def __init__(self, d: int, heads: int, mlp_hidden: int):
        super().__init__()
        self.ln1 = nn.LayerNorm(d)
        self.attn = nn.MultiheadAttention(d, heads, batch_first=True)
        self.ln2 = nn.LayerNorm(d)
        self.mlp = nn.Sequential(
            nn.Linear(d, mlp_hidden),
            nn.GELU(),
            nn.Linear(mlp_hidden, d),
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        a, _ = self.attn(self.ln1(x), self.ln1(x), self.ln1(x), need_weights=False)
        h = x + a
        return self.mlp(self.ln2(h))


class PolicyNet(nn.Module):
    def __init__(self, n_phases: int, d: int = 64, heads: int = 4,
                 mlp_hidden: int = 128):
        super().__init__()
        self.n_phases = n_phases
        self.d = d
        self.heads = heads
        self.mlp_hidden = mlp_hidden
        self.embed = nn.Linear(N_FEATURES, d)
        self.spatial = EncoderBlock(d, heads, mlp_hidden)
        self.temporal_pos = nn.Parameter(torch.zeros(N_FRAMES, d))
        self.temporal = EncoderBlock(d, heads, mlp_hidden)
        self.policy_head = nn.Linear(d, n_phases)
        self.value_head = nn.Linear(d, 1)
        # near-uniform initial action distribution; keeps early updates from
        # locking onto one phase
        nn.init.orthogonal_(self.policy_head.weight, gain=0.01)
        nn.init.zeros_(self.policy_head.bias)
        nn.init.orthogonal_(self.value_head.weight, gain=1.0)
        nn.init.zeros_(self.value_head.bias)

    def forward(self, state: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """state: (B, 5, 12, 7) -> (logits (B, P), value (B,))."""
        if state.dim() == 3:
            state = state.unsqueeze(0)
        b = state.shape[0]
        tokens = self.embed(state.reshape(b * N_FRAMES, N_MOVEMENT_SLOTS, N_FEATURES))
        spatial = self.spatial(tokens)
        frame_repr = spatial.mean(dim=1).reshape(b, N_FRAMES, self.d)
        seq = frame_repr + self.temporal_pos
        temporal = self.temporal(seq)
        pooled = temporal.mean(dim=1)
        logits = self.policy_head(pooled)
        value = self.value_head(pooled).squeeze(-1)
        return logits, value


def policy_forward(net: PolicyNet, state: np.ndarray) -> tuple[np.ndarray, float]:
    """Action distribution over phases plus the value estimate.

    Raises on non-finite outputs (the training-divergence tripwire)."""
    with torch.no_grad():
        t = torch.as_tensor(np.asarray(state), dtype=next(net.parameters()).dtype)
        logits, value = net(t)
        probs = torch.softmax(logits, dim=-1)
    probs_np = probs.squeeze(0).cpu().numpy()
    value_f = float(value.squeeze(0))
    if not (np.all(np.isfinite(probs_np)) and np.isfinite(value_f)):
        raise FloatingPointError("non-finite policy output")
    return probs_np, value_f


def masked_distribution(logits: torch.Tensor, mask: torch.Tensor) -> torch.distributions.Categorical:
    """Categorical over feasible actions only (infeasible logits -> -inf)."""
    neg = torch.finfo(logits.dtype).min
    masked = torch.where(mask, logits, torch.full_like(logits, neg))
    return torch.distributions.Categorical(logits=masked)


class PolicyAgent:
    """Inference-side wrapper: feasibility-masked action selection."""

    def __init__(self, net: PolicyNet):
        self.net = net

    def act(self, state: np.ndarray, feasible_mask: np.ndarray,
            sample: bool = False, generator: torch.Generator | None = None
            ) -> tuple[int, float, float]:
        """Returns (action_id 1-based, log_prob, value)."""
        dtype = next(self.net.parameters()).dtype
        t = torch.as_tensor(np.asarray(state), dtype=dtype).unsqueeze(0)
        with torch.no_grad():
            logits, value = self.net(t)
        mask = torch.as_tensor(np.asarray(feasible_mask, dtype=bool)).unsqueeze(0)
        dist = masked_distribution(logits, mask)
        if sample:
            choice = torch.multinomial(dist.probs.squeeze(0), 1, generator=generator)
        else:
            choice = torch.argmax(dist.probs, dim=-1)
        logp = float(dist.log_prob(choice))
        return int(choice) + 1, logp, float(value.squeeze(0))


def save_checkpoint(net: PolicyNet, path: str) -> None:
    arrays = {f"param::{k}": v.detach().cpu().numpy()
              for k, v in net.state_dict().items()}
    np.savez(
        path,
        schema=np.array([CHECKPOINT_SCHEMA]),
        d=np.array([net.d]),
        heads=np.array([net.heads]),
        mlp_hidden=np.array([net.mlp_hidden]),
        n_phases=np.array([net.n_phases]),
        n_movement_slots=np.array([N_MOVEMENT_SLOTS]),
        **arrays,
    )


def load_checkpoint(path: str) -> PolicyNet:
    data = np.load(path)
    if int(data["schema"][0]) != CHECKPOINT_SCHEMA:
        raise ValueError(f"unsupported checkpoint schema {int(data['schema'][0])}")
    net = PolicyNet(
        n_phases=int(data["n_phases"][0]),
        d=int(data["d"][0]),
        heads=int(data["heads"][0]),
        mlp_hidden=int(data["mlp_hidden"][0]),
    )
    state = {k[len("param::"):]: torch.as_tensor(v)
             for k, v in data.items() if k.startswith("param::")}
    net.load_state_dict(state)
    return net
