"""Spatially controllable denoiser: predicts the clean sample x0 from x_t.

Architecture, per forward pass:

1. Input mixing per frame i and joint j::

       latent = M * Es_j(control) + (1 - M) * c_temp + Ex_j(x_t)

   where M is the binary control mask, Es_j / Ex_j are per-joint linear
   encoders and c_temp is a learned frame-by-joint template that stands in
   for missing control.  Timestep and text conditioning are added on top.

2. A stack of transformer blocks.  Each block runs one attention module
   with J heads, one per joint: head j attends over the f frames of joint
   j's latent with efficient (two-softmax) attention,

       out = softmax_features(Q) @ (softmax_frames(K)^T @ V),

   where Q and V are computed from the block input plus mask-gated
   embeddings ``emb = emb_mask * M + emb_control * (1 - M)`` and K from the
   plain input.  A per-frame linear layer then mixes latents across joints,
   followed by a position-wise feed-forward.  Pre-layer-norm residuals.

3. A per-joint linear head maps latents back to channel space.

Everything is written on the autodiff tape; training differentiates through
this module exactly.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .errors import HeaderMismatchError, MagicError, TruncatedPayloadError, ValidationError
from .motion import ChannelLayout, dims_for_joints
from .textemb import DEFAULT_TEXT_DIM, TextCondition

CHECKPOINT_MAGIC = b"CMGW"
CHECKPOINT_VERSION = 1

# per-joint channel width after packing: root uses 11 of 12, others all 12
TOKEN_CHANNELS = 12


@dataclass(frozen=True)
class ArchConfig:
    frames: int = 60
    joints: int = 22
    latent: int = 32
    blocks: int = 4
    ffn_mult: int = 2
    time_dim: int = 64
    text_dim: int = DEFAULT_TEXT_DIM
    T: int = 1000

    def __post_init__(self):
        if self.frames < 1 or self.joints < 2 or self.latent < 1:
            raise ValidationError("frames, joints and latent must be positive")
        if self.blocks < 1 or self.ffn_mult < 1 or self.time_dim < 2:
            raise ValidationError("blocks, ffn_mult and time_dim must be positive")

    @property
    def D(self) -> int:
        return dims_for_joints(self.joints)


@dataclass
class DenoiserWeights:
    cfg: ArchConfig
    params: dict[str, ad.Tensor] = field(default_factory=dict)

    def values(self) -> dict[str, np.ndarray]:
        return {k: v.value for k, v in self.params.items()}

    def require_grad(self, flag: bool) -> None:
        for p in self.params.values():
            p.requires_grad = flag
            p.grad = None


def _param_shapes(cfg: ArchConfig) -> list[tuple[str, tuple[int, ...]]]:
    f, J, L = cfg.frames, cfg.joints, cfg.latent
    H = cfg.ffn_mult * L
    shapes: list[tuple[str, tuple[int, ...]]] = [
        ("enc_s_w", (J, 3, L)),
        ("enc_s_b", (J, 1, L)),
        ("enc_x_w", (J, TOKEN_CHANNELS, L)),
        ("enc_x_b", (J, 1, L)),
        ("c_temp", (f, J, L)),
        ("time_w1", (cfg.time_dim, L)),
        ("time_b1", (L,)),
        ("time_w2", (L, L)),
        ("time_b2", (L,)),
        ("text_w", (cfg.text_dim, L)),
        ("text_b", (L,)),
        ("ln_f_g", (L,)),
        ("ln_f_b", (L,)),
        ("head_w", (J, L, TOKEN_CHANNELS)),
        ("head_b", (J, 1, TOKEN_CHANNELS)),
    ]
    for i in range(cfg.blocks):
        b = f"b{i}_"
        shapes += [
            (b + "ln1_g", (L,)),
            (b + "ln1_b", (L,)),
            (b + "ln2_g", (L,)),
            (b + "ln2_b", (L,)),
            (b + "emb_q_mask", (f, J, L)),
            (b + "emb_q_ctrl", (f, J, L)),
            (b + "emb_v_mask", (f, J, L)),
            (b + "emb_v_ctrl", (f, J, L)),
            (b + "wq", (J, L, L)),
            (b + "wk", (J, L, L)),
            (b + "wv", (J, L, L)),
            (b + "wo", (J, L, L)),
            (b + "bq", (J, 1, L)),
            (b + "bk", (J, 1, L)),
            (b + "bv", (J, 1, L)),
            (b + "bo", (J, 1, L)),
            (b + "mix_w", (J, J)),
            (b + "mix_b", (J, 1)),
            (b + "ffn_w1", (L, H)),
            (b + "ffn_b1", (H,)),
            (b + "ffn_w2", (H, L)),
            (b + "ffn_b2", (L,)),
        ]
    return shapes


def init_weights(cfg: ArchConfig, rng: np.random.Generator) -> DenoiserWeights:
    """Seeded initialisation: scaled-normal matrices, zero biases, unit norms."""
    params: dict[str, ad.Tensor] = {}
    for name, shape in _param_shapes(cfg):
        if name.endswith(("_b", "_b1", "_b2")):
            value = np.zeros(shape)
        elif name.endswith(("ln1_g", "ln2_g")) or name == "ln_f_g":
            value = np.ones(shape)
        elif name.endswith(("ln1_b", "ln2_b")) or name == "ln_f_b":
            value = np.zeros(shape)
        elif name.endswith(("bq", "bk", "bv", "bo", "mix_b")):
            value = np.zeros(shape)
        elif name.endswith("mix_w"):
            value = np.eye(shape[0]) + rng.normal(scale=0.02, size=shape)
        elif name.endswith(("emb_q_mask", "emb_q_ctrl", "emb_v_mask", "emb_v_ctrl", "c_temp")):
            value = rng.normal(scale=0.02, size=shape)
        else:
            fan_in = shape[-2] if len(shape) >= 2 else shape[0]
            value = rng.normal(scale=1.0 / np.sqrt(fan_in), size=shape)
        params[name] = ad.Tensor(np.asarray(value, dtype=np.float64))
    return DenoiserWeights(cfg=cfg, params=params)


# ----------------------------------------------------------------------
# channel packing: (..., f, D) <-> (..., f, J, 12)
def pack_joint_channels(x: ad.Tensor, J: int) -> ad.Tensor:
    lay = ChannelLayout(J)
    root = x[..., lay.root]  # omega, vx, vz, height
    vel = ad.reshape(x[..., lay.velocities], x.shape[:-1] + (J, 3))
    contacts = x[..., lay.contacts]
    pad = ad.mul(x[..., :1], 0.0)
    root_feat = ad.concatenate([root, vel[..., 0, :], contacts, pad], axis=-1)
    root_feat = ad.reshape(root_feat, root_feat.shape[:-1] + (1, TOKEN_CHANNELS))

    pos = ad.reshape(x[..., lay.positions], x.shape[:-1] + (J - 1, 3))
    rot = ad.reshape(x[..., lay.rotations], x.shape[:-1] + (J - 1, 6))
    others = ad.concatenate([pos, vel[..., 1:, :], rot], axis=-1)
    return ad.concatenate([root_feat, others], axis=-2)


def unpack_joint_channels(tokens: ad.Tensor, J: int) -> ad.Tensor:
    root_feat = tokens[..., 0, :]
    root = root_feat[..., 0:4]
    vel0 = root_feat[..., 4:7]
    contacts = root_feat[..., 7:11]
    others = tokens[..., 1:, :]
    pos = others[..., 0:3]
    velj = others[..., 3:6]
    rot = others[..., 6:12]

    lead = tokens.shape[:-2]
    flat = lambda t, n: ad.reshape(t, lead + (n,))
    vel0 = ad.reshape(vel0, lead + (1, 3))
    vel = ad.concatenate([vel0, velj], axis=-2)
    return ad.concatenate(
        [
            root,
            flat(pos, (J - 1) * 3),
            flat(vel, J * 3),
            flat(rot, (J - 1) * 6),
            contacts,
        ],
        axis=-1,
    )


# ----------------------------------------------------------------------
def timestep_embedding(t: np.ndarray, dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, (B, dim)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    args = t[:, None] * freqs[None, :]
    emb = np.concatenate([np.sin(args), np.cos(args)], axis=1)
    if dim % 2:
        emb = np.concatenate([emb, np.zeros((emb.shape[0], 1))], axis=1)
    return emb


def gate_attention_embeddings(
    emb_mask: ad.Tensor, emb_ctrl: ad.Tensor, mask: np.ndarray
) -> ad.Tensor:
    """emb = emb_mask * M + emb_ctrl * (1 - M), entrywise over (f, J, L)."""
    m = np.asarray(mask, dtype=np.float64)[..., None]
    return ad.add(ad.mul(emb_mask, m), ad.mul(emb_ctrl, 1.0 - m))


def input_mixing(
    x_t: ad.Tensor,
    control: np.ndarray,
    mask: np.ndarray,
    weights: DenoiserWeights,
) -> ad.Tensor:
    """Fuse noisy channels, spatial control and the learned template.

    Inputs are batched: x_t (B, f, D), control (B, f, J, 3), mask (B, f, J).
    Returns latents in joint-major layout (B, J, f, L).
    """
    cfg = weights.cfg
    p = weights.params
    m = np.asarray(mask, dtype=np.float64)
    c_clean = np.asarray(control, dtype=np.float64) * m[..., None]

    c_tok = ad.transpose(ad.Tensor(c_clean), (0, 2, 1, 3))  # (B, J, f, 3)
    ctrl_lat = ad.add(ad.matmul(c_tok, p["enc_s_w"]), p["enc_s_b"])

    x_tok = ad.transpose(pack_joint_channels(x_t, cfg.joints), (0, 2, 1, 3))
    x_lat = ad.add(ad.matmul(x_tok, p["enc_x_w"]), p["enc_x_b"])

    temp = ad.transpose(p["c_temp"], (1, 0, 2))  # (J, f, L)
    mT = np.swapaxes(m, 1, 2)[..., None]  # (B, J, f, 1)
    return ad.add(
        ad.add(ad.mul(ctrl_lat, mT), ad.mul(temp, 1.0 - mT)),
        x_lat,
    )


def control_attention(
    latent: ad.Tensor,
    mask: np.ndarray,
    weights: DenoiserWeights,
    block: int,
) -> ad.Tensor:
    """Joint-wise efficient attention plus cross-joint mixing.

    ``latent`` is the normalised block input, (B, J, f, L); ``mask`` is
    (B, f, J).  Returns the residual branch output, same shape.
    """
    p = weights.params
    b = f"b{block}_"
    mT = np.swapaxes(np.asarray(mask, dtype=np.float64), 1, 2)[..., None]

    def gated(kind: str) -> ad.Tensor:
        em = ad.transpose(p[b + f"emb_{kind}_mask"], (1, 0, 2))
        ec = ad.transpose(p[b + f"emb_{kind}_ctrl"], (1, 0, 2))
        return ad.add(ad.mul(em, mT), ad.mul(ec, 1.0 - mT))

    q_in = ad.add(latent, gated("q"))
    v_in = ad.add(latent, gated("v"))
    q = ad.add(ad.matmul(q_in, p[b + "wq"]), p[b + "bq"])
    k = ad.add(ad.matmul(latent, p[b + "wk"]), p[b + "bk"])
    v = ad.add(ad.matmul(v_in, p[b + "wv"]), p[b + "bv"])

    qn = ad.softmax(q, axis=-1)  # over features
    kn = ad.softmax(k, axis=-2)  # over frames
    ctx = ad.matmul(ad.transpose(kn, (0, 1, 3, 2)), v)  # (B, J, L, L)
    att = ad.add(ad.matmul(ad.matmul(qn, ctx), p[b + "wo"]), p[b + "bo"])

    # per-frame linear mixing across joints
    att_f = ad.transpose(att, (0, 2, 1, 3))  # (B, f, J, L)
    mixed = ad.add(ad.matmul(p[b + "mix_w"], att_f), p[b + "mix_b"])
    return ad.transpose(mixed, (0, 2, 1, 3))


def _validate_forward_inputs(
    x_t: np.ndarray,
    t: np.ndarray,
    control: np.ndarray,
    mask: np.ndarray,
    cfg: ArchConfig,
) -> None:
    f, J = cfg.frames, cfg.joints
    if x_t.shape[1:] != (f, cfg.D):
        raise ValidationError(f"x_t must be (batch, {f}, {cfg.D}), got {x_t.shape}")
    if control.shape != (x_t.shape[0], f, J, 3):
        raise ValidationError(f"control must be (batch, {f}, {J}, 3), got {control.shape}")
    if mask.shape != (x_t.shape[0], f, J):
        raise ValidationError(f"mask must be (batch, {f}, {J}), got {mask.shape}")
    if not np.all(np.isfinite(x_t)):
        raise ValidationError("x_t contains non-finite values")
    if not np.all(np.isfinite(control)):
        raise ValidationError("control contains non-finite values")
    if not np.all((mask == 0.0) | (mask == 1.0)):
        raise ValidationError("mask entries must be exactly 0 or 1")
    if np.any(t < 0) or np.any(t >= cfg.T):
        raise ValidationError(f"timesteps must lie in [0, {cfg.T})")


def denoise_forward_tensor(
    x_t: ad.Tensor,
    t: np.ndarray,
    text: list[TextCondition],
    control: np.ndarray,
    mask: np.ndarray,
    weights: DenoiserWeights,
) -> ad.Tensor:
    """Batched forward pass on the tape: (B, f, D) -> (B, f, D) x0 prediction."""
    cfg = weights.cfg
    p = weights.params

    h = input_mixing(x_t, control, mask, weights)  # (B, J, f, L)

    t_emb = timestep_embedding(np.asarray(t), cfg.time_dim)
    t_lat = ad.add(ad.matmul(ad.Tensor(t_emb), p["time_w1"]), p["time_b1"])
    t_lat = ad.add(ad.matmul(ad.gelu(t_lat), p["time_w2"]), p["time_b2"])
    t_lat = ad.reshape(t_lat, (t_emb.shape[0], 1, 1, cfg.latent))

    emb_rows = np.stack(
        [np.zeros(cfg.text_dim) if tc.null else tc.embedding for tc in text]
    )
    if emb_rows.shape[1] != cfg.text_dim:
        raise ValidationError(
            f"text embedding dim {emb_rows.shape[1]} != model text_dim {cfg.text_dim}"
        )
    txt_lat = ad.add(ad.matmul(ad.Tensor(emb_rows), p["text_w"]), p["text_b"])
    txt_lat = ad.reshape(txt_lat, (emb_rows.shape[0], 1, 1, cfg.latent))

    h = ad.add(ad.add(h, t_lat), txt_lat)

    for i in range(cfg.blocks):
        b = f"b{i}_"
        n1 = ad.layer_norm(h, p[b + "ln1_g"], p[b + "ln1_b"])
        h = ad.add(h, control_attention(n1, mask, weights, i))
        n2 = ad.layer_norm(h, p[b + "ln2_g"], p[b + "ln2_b"])
        ff = ad.matmul(ad.gelu(ad.add(ad.matmul(n2, p[b + "ffn_w1"]), p[b + "ffn_b1"])), p[b + "ffn_w2"])
        h = ad.add(h, ad.add(ff, p[b + "ffn_b2"]))

    out = ad.layer_norm(h, p["ln_f_g"], p["ln_f_b"])
    tokens = ad.add(ad.matmul(out, p["head_w"]), p["head_b"])  # (B, J, f, 12)
    tokens = ad.transpose(tokens, (0, 2, 1, 3))
    return unpack_joint_channels(tokens, cfg.joints)


def denoise_forward(
    x_t: np.ndarray,
    t: int,
    text: TextCondition,
    control: np.ndarray | None,
    mask: np.ndarray | None,
    weights: DenoiserWeights,
) -> np.ndarray:
    """Single-sequence x0 prediction; ``control=None`` means an all-zero mask."""
    cfg = weights.cfg
    x_t = np.asarray(x_t, dtype=np.float64)
    if x_t.shape != (cfg.frames, cfg.D):
        raise ValidationError(f"x_t must be ({cfg.frames}, {cfg.D}), got {x_t.shape}")
    if control is None:
        control = np.zeros((cfg.frames, cfg.joints, 3))
    if mask is None:
        mask = np.zeros((cfg.frames, cfg.joints))
    xb = x_t[None]
    cb = np.asarray(control, dtype=np.float64)[None]
    mb = np.asarray(mask, dtype=np.float64)[None]
    tb = np.array([int(t)])
    _validate_forward_inputs(xb, tb, cb, mb, cfg)
    out = denoise_forward_tensor(ad.Tensor(xb), tb, [text], cb, mb, weights)
    return out.value[0]


# ----------------------------------------------------------------------
# checkpoint format: magic CMGW | u32 header length | JSON header | f32le payload
def checkpoint_bytes(weights: DenoiserWeights, seed: int | None = None) -> bytes:
    names = sorted(weights.params)
    header = {
        "version": CHECKPOINT_VERSION,
        "arch": {
            "frames": weights.cfg.frames,
            "joints": weights.cfg.joints,
            "latent": weights.cfg.latent,
            "blocks": weights.cfg.blocks,
            "ffn_mult": weights.cfg.ffn_mult,
            "time_dim": weights.cfg.time_dim,
            "text_dim": weights.cfg.text_dim,
            "T": weights.cfg.T,
        },
        "dtype": "f32le",
        "tensors": [{"name": n, "shape": list(weights.params[n].shape)} for n in names],
    }
    if seed is not None:
        header["seed"] = int(seed)
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf = io.BytesIO()
    buf.write(CHECKPOINT_MAGIC)
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for n in names:
        buf.write(weights.params[n].value.astype("<f4").tobytes())
    return buf.getvalue()


def save_checkpoint(weights: DenoiserWeights, path: str, seed: int | None = None) -> None:
    with open(path, "wb") as fh:
        fh.write(checkpoint_bytes(weights, seed))


def load_checkpoint(path: str) -> DenoiserWeights:
    with open(path, "rb") as fh:
        raw = fh.read()
    return checkpoint_from_bytes(raw)


def checkpoint_from_bytes(raw: bytes) -> DenoiserWeights:
    if raw[:4] != CHECKPOINT_MAGIC:
        raise MagicError(f"bad checkpoint magic {raw[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    if len(raw) < 8:
        raise TruncatedPayloadError("checkpoint shorter than its fixed header")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if len(raw) < 8 + hlen:
        raise TruncatedPayloadError("checkpoint header extends past end of file")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HeaderMismatchError(f"unreadable checkpoint header: {exc}") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise HeaderMismatchError(f"unsupported checkpoint version {header.get('version')}")
    if header.get("dtype") != "f32le":
        raise HeaderMismatchError(f"unsupported checkpoint dtype {header.get('dtype')}")
    cfg = ArchConfig(**header["arch"])
    expected = {name: tuple(shape) for name, shape in _param_shapes(cfg)}
    payload = raw[8 + hlen :]
    total = sum(int(np.prod(t["shape"])) for t in header["tensors"])
    if len(payload) != total * 4:
        raise TruncatedPayloadError(
            f"payload holds {len(payload)} bytes, header demands {total * 4}"
        )
    params: dict[str, ad.Tensor] = {}
    offset = 0
    for entry in header["tensors"]:
        name, shape = entry["name"], tuple(entry["shape"])
        if name not in expected or expected[name] != shape:
            raise HeaderMismatchError(f"tensor {name} with shape {shape} does not fit the arch")
        count = int(np.prod(shape))
        arr = np.frombuffer(payload, dtype="<f4", count=count, offset=offset)
        params[name] = ad.Tensor(arr.astype(np.float64).reshape(shape))
        offset += count * 4
    missing = set(expected) - set(params)
    if missing:
        raise HeaderMismatchError(f"checkpoint missing tensors: {sorted(missing)}")
    return DenoiserWeights(cfg=cfg, params=params)
