"""Permutation-invariant attention networks for action selection and valuation.

Each candidate ego trajectory gets its own attention pass: the Query rows are
built from that trajectory plus fixed random seed rows, so reordering the
surrounding objects permutes only Key/Value rows and every output row is an
order-free weighted sum.  Swapping the ego trajectory with a surrounding one
changes the Query and therefore the output, which is what lets the network
treat the ego specially.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad


@dataclass
class AttentionConfig:
    n_actions: int                 # candidate ego trajectories per decision
    n_objects: int                 # surrounding slots (padded to this count)
    horizon: int                   # imagined samples beyond the current one
    n_query: int = 6
    d_q: int = 24
    d_v: int = 24
    hidden: int = 64
    pos_scale: float = 50.0        # meters mapped to 1.0 in network inputs
    scale_scores: bool = False     # optional 1/sqrt(d_q) on attention scores
    share_blocks: bool = True      # one projection set across ego trajectories

    def __post_init__(self):
        if self.n_query < 2:
            raise ValueError("n_query must be at least 2")
        for name in ("n_actions", "n_objects", "horizon", "d_q", "d_v", "hidden"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    @property
    def embed_dim(self) -> int:
        return 2 * (self.horizon + 1)

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_dict(cls, d: dict) -> "AttentionConfig":
        return cls(**d)


@dataclass
class PolicyOutput:
    probs: np.ndarray       # (n,)
    log_probs: np.ndarray   # (n,)
    attn: np.ndarray        # (n, N_q, m+1) softmax rows per ego trajectory


def _block_prefixes(cfg: AttentionConfig, i: int) -> str:
    return "blk" if cfg.share_blocks else f"blk{i}"


def init_attention_params(store: ad.ParamStore, cfg: AttentionConfig, rng: np.random.Generator) -> None:
    """Register projection networks, frozen seed rows, and the output head."""
    d = cfg.embed_dim
    blocks = 1 if cfg.share_blocks else cfg.n_actions
    for b in range(blocks):
        p = _block_prefixes(cfg, b)
        ad.init_mlp(store, f"{p}.q", (d, cfg.hidden, cfg.hidden, cfg.d_q), rng)
        ad.init_mlp(store, f"{p}.k", (d, cfg.hidden, cfg.hidden, cfg.d_q), rng)
        ad.init_mlp(store, f"{p}.v", (d, cfg.hidden, cfg.hidden, cfg.d_v), rng)
        store.add(f"{p}.eta", rng.normal(size=(cfg.n_query - 1, d)), trainable=False)
    head_in = cfg.n_actions * cfg.n_query * cfg.d_v
    bound = np.sqrt(6.0 / (head_in + cfg.n_actions))
    store.add("head.w", rng.uniform(-bound, bound, (head_in, cfg.n_actions)))
    store.add("head.b", np.zeros(cfg.n_actions))


def encode_state(
    ego_xy,
    ego_heading: float,
    ego_samples: np.ndarray,
    other_samples: np.ndarray,
    pos_scale: float = 50.0,
) -> np.ndarray:
    """Flatten trajectories into per-trajectory attention inputs.

    ego_samples: (n, K+1, 2); other_samples: (m, K+1, 2), world coordinates.
    Every trajectory is translated/rotated into the ego frame and scaled.
    Returns (n, m+1, 2*(K+1)): row 0 of each input is the ego trajectory.
    """
    n, kp1, _ = ego_samples.shape
    m = other_samples.shape[0]
    if other_samples.shape[1] != kp1:
        raise ad.ShapeError(
            f"sample count mismatch: ego {kp1} vs surrounding {other_samples.shape[1]}"
        )
    c, s = np.cos(-ego_heading), np.sin(-ego_heading)
    rot = np.array([[c, -s], [s, c]])
    all_samples = np.concatenate([ego_samples, other_samples], axis=0)  # (n+m, K+1, 2)
    local = (all_samples - np.asarray(ego_xy)) @ rot.T / pos_scale
    flat = local.reshape(n + m, 2 * kp1)
    out = np.empty((n, m + 1, 2 * kp1))
    for i in range(n):
        out[i, 0] = flat[i]
        out[i, 1:] = flat[n:]
    return out


def attention_block(
    store: ad.ParamStore,
    prefix: str,
    inputs: np.ndarray,
    cfg: AttentionConfig,
) -> tuple[ad.Node, np.ndarray]:
    """One attention pass: inputs (..., m+1, D) -> (output node, attention rows).

    Row 0 of the inputs is the ego trajectory; the Query stack is that row
    plus the frozen seed rows, all passed through the Query projection.
    """
    eta = store[f"{prefix}.eta"].value
    ego_row = inputs[..., :1, :]
    q_in = np.concatenate([ego_row, np.broadcast_to(eta, ego_row.shape[:-2] + eta.shape)], axis=-2)
    q = ad.mlp_forward(store, f"{prefix}.q", q_in)
    k = ad.mlp_forward(store, f"{prefix}.k", inputs)
    v = ad.mlp_forward(store, f"{prefix}.v", inputs)
    scores = ad.matmul(q, ad.swap_last(k))
    if cfg.scale_scores:
        scores = ad.mul(scores, 1.0 / np.sqrt(cfg.d_q))
    weights = ad.softmax(scores)
    out = ad.matmul(weights, v)
    return out, weights.value


def forward_logits(
    store: ad.ParamStore,
    cfg: AttentionConfig,
    enc: np.ndarray,
) -> tuple[ad.Node, np.ndarray]:
    """Shared trunk of policy and critic: (..., n, m+1, D) -> (..., n) head outputs."""
    if enc.shape[-1] != cfg.embed_dim or enc.shape[-3] != cfg.n_actions:
        raise ad.ShapeError(f"encoded state shape {enc.shape} does not match config")
    lead = enc.shape[:-3]
    if cfg.share_blocks:
        out, attn = attention_block(store, _block_prefixes(cfg, 0), enc, cfg)
    else:
        outs, attns = [], []
        for i in range(cfg.n_actions):
            o, a = attention_block(store, _block_prefixes(cfg, i), enc[..., i, :, :], cfg)
            outs.append(ad.reshape(o, o.value.shape[:-2] + (1,) + o.value.shape[-2:]))
            attns.append(a[..., None, :, :])
        out = ad.concat(outs, axis=-3)
        attn = np.concatenate(attns, axis=-3)
    flat = ad.reshape(out, (lead or (1,)) + (cfg.n_actions * cfg.n_query * cfg.d_v,))
    logits = ad.add(ad.matmul(flat, store.node("head.w")), store.node("head.b"))
    if not lead:
        logits = ad.reshape(logits, (cfg.n_actions,))
    return logits, attn


def policy_forward(store: ad.ParamStore, cfg: AttentionConfig, enc: np.ndarray) -> PolicyOutput:
    """Categorical distribution over the ego trajectories for one state."""
    logits, attn = forward_logits(store, cfg, enc)
    log_probs = ad.log_softmax(logits).value
    return PolicyOutput(probs=np.exp(log_probs), log_probs=log_probs, attn=attn)


def q_forward(store: ad.ParamStore, cfg: AttentionConfig, enc: np.ndarray) -> np.ndarray:
    """Action values for one (or a batch of) encoded state(s)."""
    logits, _ = forward_logits(store, cfg, enc)
    return logits.value


def sample_action(output: PolicyOutput, rng: np.random.Generator, greedy: bool = False) -> tuple[int, float]:
    """Draw (or argmax) an action index; returns it with its log-probability."""
    if greedy:
        z = int(np.argmax(output.probs))
    else:
        z = int(rng.choice(len(output.probs), p=output.probs / output.probs.sum()))
    return z, float(output.log_probs[z])
