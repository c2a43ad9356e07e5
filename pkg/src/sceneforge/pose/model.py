"""Program-conditioned two-stage orientation classifier over 36 bins.

Per object slot, feature encodings (category embedding, box affine+tanh,
nearest-wall and wall-set encodings, and for dependent objects the target
angle as (sin 2t, cos 2t) plus a hashed call-text embedding) are summed,
passed through a shared stack of multi-head self-attention + feedforward
residual layers, and projected to 36 logits.

The primary stage attends over primary slots only. The dependent stage
attends over dependent slots jointly with the primary slots' fused
encodings as frozen context (no gradient flows into the context). Both
stages share every parameter. All math is float64 and hand-backpropagated;
gradients are validated against central finite differences in the tests.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np

from .. import dsl
from ..errors import SceneForgeError
from ..geometry import (
    N_ORIENTATION_BINS,
    nearest_wall,
)
from ..interp import Layout, ROLE_DEPENDENT, ROLE_PRIMARY


@dataclass(frozen=True)
class PoseModelConfig:
    dim: int = 128
    heads: int = 4
    layers: int = 2
    ffn_mult: int = 4
    call_buckets: int = 256
    n_bins: int = N_ORIENTATION_BINS
    categories: tuple = ("<unk>",)
    condition_on_dependency: bool = True

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise SceneForgeError(f"dim {self.dim} not divisible by heads {self.heads}")
        if self.categories[0] != "<unk>":
            raise SceneForgeError("categories[0] must be the '<unk>' bucket")


def _param_shapes(cfg: PoseModelConfig) -> dict:
    d, f = cfg.dim, cfg.dim * cfg.ffn_mult
    shapes = {
        "cat_embed": (len(cfg.categories), d),
        "box_w": (4, d),
        "box_b": (d,),
        "wall_w": (5, d),
        "wall_b": (d,),
        "call_embed": (cfg.call_buckets, d),
        "tgt_w": (2, d),
        "tgt_b": (d,),
    }
    for l in range(cfg.layers):
        for name in ("wq", "wk", "wv", "wo"):
            shapes[f"attn{l}_{name}"] = (d, d)
        for name in ("bq", "bk", "bv", "bo"):
            shapes[f"attn{l}_{name}"] = (d,)
        shapes[f"ffn{l}_w1"] = (d, f)
        shapes[f"ffn{l}_b1"] = (f,)
        shapes[f"ffn{l}_w2"] = (f, d)
        shapes[f"ffn{l}_b2"] = (d,)
    shapes["head_w"] = (d, cfg.n_bins)
    shapes["head_b"] = (cfg.n_bins,)
    return shapes


class PoseModel:
    def __init__(self, config: PoseModelConfig, params: dict):
        self.config = config
        self.params = params

    @classmethod
    def init_random(cls, config: PoseModelConfig, seed: int) -> "PoseModel":
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in _param_shapes(config).items():
            if name.endswith("_b") or name.endswith(("bq", "bk", "bv", "bo", "b1", "b2")):
                params[name] = np.zeros(shape, dtype=np.float64)
            elif "embed" in name:
                params[name] = rng.normal(0.0, 0.02, size=shape)
            else:
                params[name] = rng.normal(0.0, 1.0 / np.sqrt(shape[0]), size=shape)
        return cls(config, params)

    def zero_grads(self) -> dict:
        return {name: np.zeros_like(p) for name, p in self.params.items()}

    def category_id(self, category: str) -> int:
        try:
            return self.config.categories.index(category)
        except ValueError:
            return 0

    # -- serialization: JSON manifest + adjacent raw little-endian blob ------

    def save(self, path):
        path = Path(path)
        blob_path = path.with_name(path.name + ".bin")
        names = sorted(self.params)
        manifest = {
            "schema": 1,
            "dtype": "<f8",
            "blob": blob_path.name,
            "config": asdict(self.config),
            "params": [{"name": n, "shape": list(self.params[n].shape)} for n in names],
        }
        manifest["config"]["categories"] = list(self.config.categories)
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(blob_path, "wb") as fh:
            for n in names:
                fh.write(np.ascontiguousarray(self.params[n], dtype="<f8").tobytes())

    @classmethod
    def load(cls, path) -> "PoseModel":
        path = Path(path)
        with open(path, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        cfg_dict = dict(manifest["config"])
        cfg_dict["categories"] = tuple(cfg_dict["categories"])
        config = PoseModelConfig(**cfg_dict)
        blob = (path.parent / manifest["blob"]).read_bytes()
        params = {}
        offset = 0
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
            params[entry["name"]] = arr.reshape(shape).astype(np.float64)
            offset += count * 8
        return cls(config, params)


# ---------------------------------------------------------------------------
# feature extraction
# ---------------------------------------------------------------------------

def hash_call_tokens(call_text: str, buckets: int) -> list[int]:
    """Deterministic hashed token ids for an instantiating-call string."""
    tokens = [t.text for t in dsl.lex(call_text) if t.kind not in {"newline", "eof"}]
    return [zlib.crc32(t.encode("utf-8")) % buckets for t in tokens] or [0]


def angle_features(theta_degrees: float) -> np.ndarray:
    """(sin 2t, cos 2t): angles t and t+180 encode identically."""
    rad = np.deg2rad(theta_degrees)
    return np.array([np.sin(2.0 * rad), np.cos(2.0 * rad)], dtype=np.float64)


@dataclass
class StageInputs:
    ids: list
    cat_ids: np.ndarray          # (n,)
    boxes: np.ndarray            # (n, 4)
    near_walls: np.ndarray       # (n, 5)
    walls: np.ndarray            # (m, 5)
    tgt_feats: np.ndarray | None = None    # (n, 2)
    call_tokens: list | None = None        # n lists of ints


def build_stage_inputs(
    model: PoseModel,
    layout: Layout,
    ids: list,
    target_thetas: dict | None = None,
) -> StageInputs:
    cfg = model.config
    objs = [layout.object_by_id(i) for i in ids]
    cat_ids = np.array([model.category_id(o.category) for o in objs], dtype=np.int64)
    boxes = np.array([o.box.as_list() for o in objs], dtype=np.float64).reshape(len(objs), 4)
    if layout.walls:
        walls = np.stack([w.features() for w in layout.walls])
        near = np.stack([nearest_wall(o.box.center, layout.walls)[0].features() for o in objs]) \
            if objs else np.zeros((0, 5))
    else:
        walls = np.zeros((1, 5), dtype=np.float64)
        near = np.zeros((len(objs), 5), dtype=np.float64)
    tgt = None
    tokens = None
    if target_thetas is not None:
        rows = []
        tokens = []
        for o in objs:
            if o.dependency_target is None or o.dependency_target not in target_thetas:
                raise SceneForgeError(f"missing target theta for dependent object {o.id}")
            rows.append(angle_features(target_thetas[o.dependency_target]))
            tokens.append(hash_call_tokens(o.instantiating_call, cfg.call_buckets))
        tgt = np.array(rows, dtype=np.float64).reshape(len(objs), 2)
    return StageInputs(list(ids), cat_ids, boxes, near, walls, tgt, tokens)


def primary_ids(layout: Layout) -> list:
    return [o.id for o in layout.objects if o.role == ROLE_PRIMARY]


def dependent_ids(layout: Layout) -> list:
    return [o.id for o in layout.objects if o.role == ROLE_DEPENDENT]


# ---------------------------------------------------------------------------
# forward / backward primitives
# ---------------------------------------------------------------------------

def _affine_tanh_forward(x, w, b):
    pre = x @ w + b
    out = np.tanh(pre)
    return out, (x, out)


def _affine_tanh_backward(grad_out, cache, w, gw, gb):
    x, out = cache
    g_pre = grad_out * (1.0 - out * out)
    gw += x.T @ g_pre
    gb += g_pre.sum(axis=0)
    return g_pre @ w.T


def _fusion_forward(params, cfg: PoseModelConfig, inputs: StageInputs):
    n = len(inputs.ids)
    d = cfg.dim
    cat = params["cat_embed"][inputs.cat_ids] if n else np.zeros((0, d))
    box, box_cache = _affine_tanh_forward(inputs.boxes, params["box_w"], params["box_b"])
    near, near_cache = _affine_tanh_forward(inputs.near_walls, params["wall_w"], params["wall_b"])
    wall_enc, wall_cache = _affine_tanh_forward(inputs.walls, params["wall_w"], params["wall_b"])
    pooled = wall_enc.mean(axis=0)
    x = cat + box + near + pooled[None, :]
    extras = None
    if inputs.tgt_feats is not None and cfg.condition_on_dependency:
        tgt, tgt_cache = _affine_tanh_forward(inputs.tgt_feats, params["tgt_w"], params["tgt_b"])
        call = np.zeros((n, d))
        for i, toks in enumerate(inputs.call_tokens):
            call[i] = params["call_embed"][toks].mean(axis=0)
        x = x + tgt + call
        extras = (tgt_cache, inputs.call_tokens)
    cache = (inputs, box_cache, near_cache, wall_cache, extras)
    return x, cache


def _fusion_backward(params, cfg: PoseModelConfig, cache, grad_x, grads):
    inputs, box_cache, near_cache, wall_cache, extras = cache
    n = len(inputs.ids)
    if extras is not None:
        tgt_cache, call_tokens = extras
        _affine_tanh_backward(grad_x, tgt_cache, params["tgt_w"], grads["tgt_w"], grads["tgt_b"])
        for i, toks in enumerate(call_tokens):
            g = grad_x[i] / len(toks)
            for t in toks:
                grads["call_embed"][t] += g
    np.add.at(grads["cat_embed"], inputs.cat_ids, grad_x)
    _affine_tanh_backward(grad_x, box_cache, params["box_w"], grads["box_w"], grads["box_b"])
    _affine_tanh_backward(grad_x, near_cache, params["wall_w"], grads["wall_w"], grads["wall_b"])
    m = inputs.walls.shape[0]
    g_pooled = grad_x.sum(axis=0) / m
    _affine_tanh_backward(
        np.broadcast_to(g_pooled, (m, g_pooled.shape[0])).copy(),
        wall_cache,
        params["wall_w"],
        grads["wall_w"],
        grads["wall_b"],
    )


def _split_heads(x, heads):
    n, d = x.shape
    dk = d // heads
    return x.reshape(n, heads, dk).transpose(1, 0, 2)  # (H, n, dk)


def _merge_heads(x):
    h, n, dk = x.shape
    return x.transpose(1, 0, 2).reshape(n, h * dk)


def _attention_forward(params, cfg: PoseModelConfig, layer: int, x):
    p = lambda s: params[f"attn{layer}_{s}"]
    q = x @ p("wq") + p("bq")
    k = x @ p("wk") + p("bk")
    v = x @ p("wv") + p("bv")
    qh, kh, vh = (_split_heads(t, cfg.heads) for t in (q, k, v))
    scale = 1.0 / np.sqrt(qh.shape[-1])
    scores = qh @ kh.transpose(0, 2, 1) * scale
    scores -= scores.max(axis=-1, keepdims=True)
    exps = np.exp(scores)
    attn = exps / exps.sum(axis=-1, keepdims=True)
    ctx = attn @ vh  # (H, n, dk)
    merged = _merge_heads(ctx)
    out = merged @ p("wo") + p("bo")
    cache = (x, qh, kh, vh, attn, merged, scale)
    return out, cache


def _attention_backward(params, cfg: PoseModelConfig, layer: int, grad_out, cache, grads):
    p = lambda s: params[f"attn{layer}_{s}"]
    g = lambda s: grads[f"attn{layer}_{s}"]
    x, qh, kh, vh, attn, merged, scale = cache
    g("wo")[...] += merged.T @ grad_out
    g("bo")[...] += grad_out.sum(axis=0)
    g_merged = grad_out @ p("wo").T
    g_ctx = _split_heads(g_merged, cfg.heads)
    g_attn = g_ctx @ vh.transpose(0, 2, 1)
    g_vh = attn.transpose(0, 2, 1) @ g_ctx
    # softmax backward
    dot = (g_attn * attn).sum(axis=-1, keepdims=True)
    g_scores = attn * (g_attn - dot)
    g_qh = g_scores @ kh * scale
    g_kh = g_scores.transpose(0, 2, 1) @ qh * scale
    g_q, g_k, g_v = (_merge_heads(t) for t in (g_qh, g_kh, g_vh))
    g("wq")[...] += x.T @ g_q
    g("bq")[...] += g_q.sum(axis=0)
    g("wk")[...] += x.T @ g_k
    g("bk")[...] += g_k.sum(axis=0)
    g("wv")[...] += x.T @ g_v
    g("bv")[...] += g_v.sum(axis=0)
    return g_q @ p("wq").T + g_k @ p("wk").T + g_v @ p("wv").T


def _ffn_forward(params, layer: int, x):
    w1, b1 = params[f"ffn{layer}_w1"], params[f"ffn{layer}_b1"]
    w2, b2 = params[f"ffn{layer}_w2"], params[f"ffn{layer}_b2"]
    hidden, cache1 = _affine_tanh_forward(x, w1, b1)
    out = hidden @ w2 + b2
    return out, (cache1, hidden)


def _ffn_backward(params, layer: int, grad_out, cache, grads):
    cache1, hidden = cache
    grads[f"ffn{layer}_w2"] += hidden.T @ grad_out
    grads[f"ffn{layer}_b2"] += grad_out.sum(axis=0)
    g_hidden = grad_out @ params[f"ffn{layer}_w2"].T
    return _affine_tanh_backward(
        g_hidden, cache1, params[f"ffn{layer}_w1"],
        grads[f"ffn{layer}_w1"], grads[f"ffn{layer}_b1"],
    )


def _stack_forward(params, cfg: PoseModelConfig, x):
    caches = []
    for l in range(cfg.layers):
        attn_out, attn_cache = _attention_forward(params, cfg, l, x)
        x = x + attn_out
        ffn_out, ffn_cache = _ffn_forward(params, l, x)
        x = x + ffn_out
        caches.append((attn_cache, ffn_cache))
    return x, caches


def _stack_backward(params, cfg: PoseModelConfig, caches, grad_x, grads):
    for l in reversed(range(cfg.layers)):
        attn_cache, ffn_cache = caches[l]
        grad_x = grad_x + _ffn_backward(params, l, grad_x, ffn_cache, grads)
        grad_x = grad_x + _attention_backward(params, cfg, l, grad_x, attn_cache, grads)
    return grad_x


def _stack_head_forward(params, cfg: PoseModelConfig, x0, n_out: int):
    """Attention stack then logits head over the first ``n_out`` slots."""
    x, stack_caches = _stack_forward(params, cfg, x0)
    logits = x[:n_out] @ params["head_w"] + params["head_b"]
    return logits, (stack_caches, x, n_out)


def _stack_head_backward(params, cfg: PoseModelConfig, cache, grad_logits, grads):
    """Returns the gradient with respect to the stack input (all slots)."""
    stack_caches, x, n_out = cache
    grads["head_w"] += x[:n_out].T @ grad_logits
    grads["head_b"] += grad_logits.sum(axis=0)
    grad_x = np.zeros_like(x)
    grad_x[:n_out] = grad_logits @ params["head_w"].T
    return _stack_backward(params, cfg, stack_caches, grad_x, grads)


# ---------------------------------------------------------------------------
# public forward passes, loss, prediction
# ---------------------------------------------------------------------------

def forward_primary(model: PoseModel, layout: Layout) -> np.ndarray:
    """Logits (n_primary, 36) for the primary objects of a layout."""
    ids = primary_ids(layout)
    inputs = build_stage_inputs(model, layout, ids)
    fusion, _ = _fusion_forward(model.params, model.config, inputs)
    logits, _ = _stack_head_forward(model.params, model.config, fusion, fusion.shape[0])
    return logits


def forward_dependent(model: PoseModel, layout: Layout, target_thetas: dict) -> np.ndarray:
    """Logits (n_dependent, 36); conditioning consumes the provided target
    thetas (ground truth under teacher forcing, predictions at inference).
    The primary slots' fused encodings join the attention as context only:
    they are not re-encoded and contribute no logits."""
    dep = dependent_ids(layout)
    if not dep:
        return np.zeros((0, model.config.n_bins))
    dep_inputs = build_stage_inputs(model, layout, dep, target_thetas)
    fusion, _ = _fusion_forward(model.params, model.config, dep_inputs)
    prim = primary_ids(layout)
    if prim:
        prim_inputs = build_stage_inputs(model, layout, prim)
        context, _ = _fusion_forward(model.params, model.config, prim_inputs)
        x0 = np.concatenate([fusion, context], axis=0)
    else:
        x0 = fusion
    logits, _ = _stack_head_forward(model.params, model.config, x0, fusion.shape[0])
    return logits


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy_sum(logits: np.ndarray, bins: np.ndarray) -> float:
    if len(bins) == 0:
        return 0.0
    z = logits - logits.max(axis=-1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    return float(-log_probs[np.arange(len(bins)), bins].sum())


def loss(primary_logits: np.ndarray, dependent_logits: np.ndarray, labels) -> float:
    """Cross-entropy summed over objects and over both stages."""
    primary_bins, dependent_bins = labels
    return cross_entropy_sum(primary_logits, np.asarray(primary_bins, dtype=np.int64)) + \
        cross_entropy_sum(dependent_logits, np.asarray(dependent_bins, dtype=np.int64))


def _grad_logits(logits: np.ndarray, bins: np.ndarray) -> np.ndarray:
    g = softmax(logits)
    g[np.arange(len(bins)), bins] -= 1.0
    return g


def loss_and_grads(model: PoseModel, example, grads: dict | None = None):
    """Two-stage teacher-forced loss and parameter gradients for one scene.

    The primary fused encodings are computed once and shared: they feed the
    primary stage and serve as the dependent stage's attention context, and
    gradients from both stages flow back through them."""
    params, cfg = model.params, model.config
    if grads is None:
        grads = model.zero_grads()
    layout = example.layout
    total = 0.0

    prim = primary_ids(layout)
    dep = dependent_ids(layout)

    prim_fusion = None
    prim_fusion_cache = None
    g_prim_fusion = None
    if prim:
        prim_inputs = build_stage_inputs(model, layout, prim)
        prim_fusion, prim_fusion_cache = _fusion_forward(params, cfg, prim_inputs)
        g_prim_fusion = np.zeros_like(prim_fusion)
        logits, cache = _stack_head_forward(params, cfg, prim_fusion, prim_fusion.shape[0])
        bins = np.array([example.labels[i] for i in prim], dtype=np.int64)
        total += cross_entropy_sum(logits, bins)
        g_prim_fusion += _stack_head_backward(params, cfg, cache, _grad_logits(logits, bins), grads)

    if dep:
        dep_inputs = build_stage_inputs(model, layout, dep, example.thetas)
        dep_fusion, dep_fusion_cache = _fusion_forward(params, cfg, dep_inputs)
        n_dep = dep_fusion.shape[0]
        x0 = np.concatenate([dep_fusion, prim_fusion], axis=0) if prim else dep_fusion
        logits, cache = _stack_head_forward(params, cfg, x0, n_dep)
        bins = np.array([example.labels[i] for i in dep], dtype=np.int64)
        total += cross_entropy_sum(logits, bins)
        grad_x0 = _stack_head_backward(params, cfg, cache, _grad_logits(logits, bins), grads)
        _fusion_backward(params, cfg, dep_fusion_cache, grad_x0[:n_dep], grads)
        if prim:
            g_prim_fusion += grad_x0[n_dep:]

    if prim:
        _fusion_backward(params, cfg, prim_fusion_cache, g_prim_fusion, grads)

    return total, grads


def predict(model: PoseModel, layout: Layout) -> dict:
    """Per-object orientation in degrees: primary objects from argmax bins
    times 5 degrees, dependents conditioned on predicted target thetas in
    dependency order. Argmax ties resolve to the lowest bin."""
    thetas: dict[int, float] = {}
    prim = primary_ids(layout)
    if prim:
        logits = forward_primary(model, layout)
        for oid, row in zip(prim, logits):
            thetas[oid] = 5.0 * int(np.argmax(row))

    pending = {o.id: o for o in layout.objects if o.role == ROLE_DEPENDENT}
    context = None
    if prim:
        prim_inputs = build_stage_inputs(model, layout, prim)
        context, _ = _fusion_forward(model.params, model.config, prim_inputs)
    while pending:
        wave = [oid for oid, o in pending.items() if o.dependency_target in thetas]
        if not wave:
            raise SceneForgeError("dependency cycle among dependent objects")
        wave_inputs = build_stage_inputs(model, layout, wave, thetas)
        fusion, _ = _fusion_forward(model.params, model.config, wave_inputs)
        x0 = np.concatenate([fusion, context], axis=0) if context is not None else fusion
        logits, _ = _stack_head_forward(model.params, model.config, x0, fusion.shape[0])
        for oid, row in zip(wave, logits):
            thetas[oid] = 5.0 * int(np.argmax(row))
            del pending[oid]
    return thetas
