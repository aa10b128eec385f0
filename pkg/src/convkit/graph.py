"""Sequential model container, serialization, and layer substitution.

A model is a JSON manifest plus one raw blob of little-endian float32
values. The manifest lists layers in execution order and a tensor
directory with byte offsets and lengths into the blob. Graphs are
strictly sequential; that is enough to exercise every per-layer
transform in this toolkit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .decompose import (
    ChannelPair,
    ConvWeights,
    DecomposedPair,
    DepthwiseWeights,
    PointwiseWeights,
    SpatialPair,
    channel_decompose,
    dac_decompose,
    frobenius_norm,
    max_rank,
    spatial_decompose,
)
from .errors import NumericError, ValidationError
from .reference import (
    MacCounter,
    conv2d,
    conv_output_extent,
    dense,
    depthwise_conv,
    flatten_map,
    maxpool2,
    pointwise_conv,
    relu,
)
from .rng import Xorshift64Star

LAYER_KINDS = ("conv2d", "depthwise", "pointwise", "relu", "maxpool2", "flatten", "dense")


@dataclass
class LayerSpec:
    name: str
    kind: str
    attrs: dict = field(default_factory=dict)

    def to_manifest(self) -> dict:
        return {"name": self.name, "kind": self.kind, **self.attrs}

    @classmethod
    def from_manifest(cls, obj: dict) -> "LayerSpec":
        attrs = {k: v for k, v in obj.items() if k not in ("name", "kind")}
        return cls(name=obj["name"], kind=obj["kind"], attrs=attrs)


@dataclass
class ModelGraph:
    input_shape: tuple[int, int, int]
    layers: list[LayerSpec]
    tensors: dict[str, np.ndarray]


@dataclass(frozen=True)
class PlanEntry:
    layer: str
    scheme: str  # dac | channel | spatial
    rank: int  # depthwise rank for dac, filter count for the baselines


@dataclass
class DecompositionPlan:
    entries: list[PlanEntry]

    @classmethod
    def from_json(cls, obj: dict) -> "DecompositionPlan":
        return cls(
            entries=[
                PlanEntry(e["layer"], e["scheme"], int(e["rank"]))
                for e in obj.get("entries", [])
            ]
        )

    def to_json(self) -> dict:
        return {
            "entries": [
                {"layer": e.layer, "scheme": e.scheme, "rank": e.rank}
                for e in self.entries
            ]
        }


@dataclass
class LayerRecord:
    name: str
    scheme: str
    rank: int
    frobenius_error: float
    relative_error: float
    macs_before: int
    macs_after: int


@dataclass
class DecompositionReport:
    records: list[LayerRecord]
    total_macs_before: int
    total_macs_after: int

    @property
    def saved_ratio(self) -> float:
        if self.total_macs_before == 0:
            return 0.0
        return 1.0 - self.total_macs_after / self.total_macs_before

    def to_json(self) -> dict:
        return {
            "layers": [
                {
                    "name": r.name,
                    "scheme": r.scheme,
                    "rank": r.rank,
                    "frobenius_error": r.frobenius_error,
                    "relative_error": r.relative_error,
                    "macs_before": r.macs_before,
                    "macs_after": r.macs_after,
                }
                for r in self.records
            ],
            "total_macs_before": self.total_macs_before,
            "total_macs_after": self.total_macs_after,
            "saved_ratio": self.saved_ratio,
        }


# ---------------------------------------------------------------------------
# shape inference and MAC accounting (no weight values needed)


def _tensor_dims(model: ModelGraph, name: str, layer: str) -> tuple[int, ...]:
    if name not in model.tensors:
        raise ValidationError(f"layer {layer!r} references missing tensor {name!r}")
    return model.tensors[name].shape


def infer_shapes(model: ModelGraph) -> list[tuple[tuple, tuple, int]]:
    """Walk the graph symbolically; per layer returns
    (input shape, output shape, MAC count). Raises on any mismatch."""
    shape: tuple = tuple(model.input_shape)
    out = []
    for spec in model.layers:
        name = spec.name
        if spec.kind in ("conv2d", "depthwise", "pointwise"):
            if len(shape) != 3:
                raise ValidationError(f"layer {name!r}: expected a feature map, got {shape}")
            w, h, cin = shape
            dims = _tensor_dims(model, spec.attrs["weights"], name)
            if len(dims) != 4:
                raise ValidationError(f"layer {name!r}: weights must be 4-D, got {dims}")
            if spec.kind == "conv2d":
                n, kw, kh, c = dims
                if c != cin:
                    raise ValidationError(
                        f"layer {name!r}: input has {cin} channels, weights expect {c}"
                    )
                sw, sh = spec.attrs.get("stride", [1, 1])
                pw, ph = spec.attrs.get("padding", [0, 0])
                ow = conv_output_extent(w, kw, sw, pw)
                oh = conv_output_extent(h, kh, sh, ph)
                macs = ow * oh * c * kw * kh * n
                nshape = (ow, oh, n)
            elif spec.kind == "depthwise":
                rc, kw, kh, one = dims
                r = int(spec.attrs["multiplier"])
                if one != 1 or rc != r * cin:
                    raise ValidationError(
                        f"layer {name!r}: depthwise dims {dims} inconsistent with "
                        f"multiplier {r} on {cin} channels"
                    )
                sw, sh = spec.attrs.get("stride", [1, 1])
                pw, ph = spec.attrs.get("padding", [0, 0])
                ow = conv_output_extent(w, kw, sw, pw)
                oh = conv_output_extent(h, kh, sh, ph)
                macs = ow * oh * kw * kh * rc
                nshape = (ow, oh, rc)
            else:
                n, kw, kh, rc = dims
                if kw != 1 or kh != 1:
                    raise ValidationError(f"layer {name!r}: pointwise kernel must be 1x1")
                if rc != cin:
                    raise ValidationError(
                        f"layer {name!r}: input has {cin} channels, pointwise expects {rc}"
                    )
                macs = w * h * rc * n
                nshape = (w, h, n)
            bias = spec.attrs.get("bias")
            if bias is not None:
                bdims = _tensor_dims(model, bias, name)
                if bdims != (dims[0],):
                    raise ValidationError(
                        f"layer {name!r}: bias dims {bdims} != ({dims[0]},)"
                    )
        elif spec.kind == "relu":
            macs, nshape = 0, shape
        elif spec.kind == "maxpool2":
            if len(shape) != 3:
                raise ValidationError(f"layer {name!r}: expected a feature map, got {shape}")
            w, h, cin = shape
            if w < 2 or h < 2:
                raise ValidationError(f"layer {name!r}: map {shape} too small to pool")
            macs, nshape = 0, (w // 2, h // 2, cin)
        elif spec.kind == "flatten":
            if len(shape) != 3:
                raise ValidationError(f"layer {name!r}: expected a feature map, got {shape}")
            macs, nshape = 0, (int(np.prod(shape)),)
        elif spec.kind == "dense":
            if len(shape) != 1:
                raise ValidationError(f"layer {name!r}: dense needs a flat vector, got {shape}")
            dims = _tensor_dims(model, spec.attrs["weights"], name)
            if len(dims) != 2 or dims[0] != shape[0]:
                raise ValidationError(
                    f"layer {name!r}: dense weights {dims} incompatible with input {shape}"
                )
            bias = spec.attrs.get("bias")
            if bias is not None:
                bdims = _tensor_dims(model, bias, name)
                if bdims != (dims[1],):
                    raise ValidationError(f"layer {name!r}: bias dims {bdims} != ({dims[1]},)")
            macs, nshape = dims[0] * dims[1], (dims[1],)
        else:
            raise ValidationError(f"layer {name!r}: unknown kind {spec.kind!r}")
        out.append((shape, nshape, macs))
        shape = nshape
    return out


def count_macs(model: ModelGraph) -> MacCounter:
    """Shape-only MAC accounting for a whole model."""
    counter = MacCounter()
    for spec, (_, _, macs) in zip(model.layers, infer_shapes(model)):
        counter.add(spec.name, macs)
    return counter


def validate_model(model: ModelGraph) -> None:
    names = [s.name for s in model.layers]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValidationError(f"duplicate layer names: {dupes}")
    for name, t in model.tensors.items():
        if not np.all(np.isfinite(t)):
            raise NumericError(f"tensor {name!r} contains non-finite values")
    infer_shapes(model)


# ---------------------------------------------------------------------------
# execution


def _conv_weights(model: ModelGraph, spec: LayerSpec) -> ConvWeights:
    bias = spec.attrs.get("bias")
    return ConvWeights(
        weights=model.tensors[spec.attrs["weights"]],
        bias=model.tensors[bias] if bias else None,
        stride=tuple(spec.attrs.get("stride", [1, 1])),
        padding=tuple(spec.attrs.get("padding", [0, 0])),
    )


def run_model(model: ModelGraph, x: np.ndarray, counter: MacCounter | None = None) -> np.ndarray:
    """Forward pass of one input through the whole graph."""
    v = np.asarray(x, dtype=np.float32)
    if v.shape != tuple(model.input_shape):
        raise ValidationError(f"input shape {v.shape} != model input {model.input_shape}")
    for spec in model.layers:
        if spec.kind == "conv2d":
            v = conv2d(v, _conv_weights(model, spec), counter, spec.name)
        elif spec.kind == "depthwise":
            layer = DepthwiseWeights(
                weights=model.tensors[spec.attrs["weights"]],
                multiplier=int(spec.attrs["multiplier"]),
                channels=v.shape[2],
                stride=tuple(spec.attrs.get("stride", [1, 1])),
                padding=tuple(spec.attrs.get("padding", [0, 0])),
            )
            v = depthwise_conv(v, layer, counter, spec.name)
        elif spec.kind == "pointwise":
            bias = spec.attrs.get("bias")
            layer = PointwiseWeights(
                weights=model.tensors[spec.attrs["weights"]],
                bias=model.tensors[bias] if bias else None,
            )
            v = pointwise_conv(v, layer, counter, spec.name)
        elif spec.kind == "relu":
            v = relu(v)
        elif spec.kind == "maxpool2":
            v = maxpool2(v)
        elif spec.kind == "flatten":
            v = flatten_map(v)
        elif spec.kind == "dense":
            bias = spec.attrs.get("bias")
            v = dense(
                v,
                model.tensors[spec.attrs["weights"]],
                model.tensors[bias] if bias else None,
                counter,
                spec.name,
            )
        else:
            raise ValidationError(f"layer {spec.name!r}: unknown kind {spec.kind!r}")
    return v


# ---------------------------------------------------------------------------
# serialization


def save_model(model: ModelGraph, manifest_path, blob_path) -> None:
    """Write the manifest and the float32 blob. Output is canonical:
    saving the result of load_model reproduces both files byte for byte."""
    directory = {}
    chunks = []
    offset = 0
    for name, t in model.tensors.items():
        raw = np.ascontiguousarray(t, dtype="<f4").tobytes()
        directory[name] = {"offset": offset, "len": len(raw), "dims": list(t.shape)}
        chunks.append(raw)
        offset += len(raw)
    manifest = {
        "input": list(model.input_shape),
        "layers": [s.to_manifest() for s in model.layers],
        "tensors": directory,
    }
    Path(manifest_path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    Path(blob_path).write_bytes(b"".join(chunks))


def load_model(manifest_path, blob_path) -> ModelGraph:
    """Load and fully validate a model; any inconsistency raises with a
    diagnostic naming the offending layer or tensor."""
    try:
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"manifest {manifest_path}: {exc}") from exc
    blob = Path(blob_path).read_bytes()

    if not isinstance(manifest.get("input"), list) or len(manifest["input"]) != 3:
        raise ValidationError("manifest: 'input' must be [W, H, C]")
    tensors = {}
    for name, entry in manifest.get("tensors", {}).items():
        off, length, dims = entry["offset"], entry["len"], tuple(entry["dims"])
        if off + length > len(blob):
            raise ValidationError(f"tensor {name!r}: extends past end of blob")
        count = int(np.prod(dims, dtype=np.int64))
        if length != count * 4:
            raise ValidationError(
                f"tensor {name!r}: byte length {length} != 4 * prod{dims}"
            )
        arr = np.frombuffer(blob[off : off + length], dtype="<f4").reshape(dims)
        tensors[name] = np.ascontiguousarray(arr)
    model = ModelGraph(
        input_shape=tuple(manifest["input"]),
        layers=[LayerSpec.from_manifest(obj) for obj in manifest.get("layers", [])],
        tensors=tensors,
    )
    validate_model(model)
    return model


# ---------------------------------------------------------------------------
# plan application


def validate_plan(model: ModelGraph, plan: DecompositionPlan) -> None:
    by_name = {s.name: s for s in model.layers}
    seen = set()
    for e in plan.entries:
        if e.layer not in by_name:
            raise ValidationError(f"plan names unknown layer {e.layer!r}")
        if e.layer in seen:
            raise ValidationError(f"plan names layer {e.layer!r} twice")
        seen.add(e.layer)
        spec = by_name[e.layer]
        if spec.kind != "conv2d":
            raise ValidationError(f"plan targets non-conv layer {e.layer!r} ({spec.kind})")
        n, kw, kh, c = model.tensors[spec.attrs["weights"]].shape
        bound = max_rank(e.scheme, n, kw, kh, c)
        if not 1 <= e.rank <= bound:
            raise ValidationError(
                f"plan rank {e.rank} for layer {e.layer!r} out of range [1, {bound}]"
            )


def _dac_layers(name: str, pair: DecomposedPair) -> tuple[list[LayerSpec], dict]:
    dw, pw = pair.depthwise, pair.pointwise
    tensors = {f"{name}/a.weights": dw.weights, f"{name}/b.weights": pw.weights}
    a = LayerSpec(
        f"{name}/a",
        "depthwise",
        {
            "multiplier": pair.rank,
            "stride": list(dw.stride),
            "padding": list(dw.padding),
            "weights": f"{name}/a.weights",
        },
    )
    battrs = {"weights": f"{name}/b.weights"}
    if pw.bias is not None:
        tensors[f"{name}/b.bias"] = pw.bias
        battrs["bias"] = f"{name}/b.bias"
    return [a, LayerSpec(f"{name}/b", "pointwise", battrs)], tensors


def _conv_layerspec(name: str, layer, tensors: dict, kind: str = "conv2d") -> LayerSpec:
    tensors[f"{name}.weights"] = layer.weights
    attrs = {
        "stride": list(layer.stride),
        "padding": list(layer.padding),
        "weights": f"{name}.weights",
    }
    if layer.bias is not None:
        tensors[f"{name}.bias"] = layer.bias
        attrs["bias"] = f"{name}.bias"
    return LayerSpec(name, kind, attrs)


def _channel_layers(name: str, pair: ChannelPair) -> tuple[list[LayerSpec], dict]:
    tensors: dict = {}
    a = _conv_layerspec(f"{name}/a", pair.first, tensors)
    battrs = {"weights": f"{name}/b.weights"}
    tensors[f"{name}/b.weights"] = pair.second.weights
    if pair.second.bias is not None:
        tensors[f"{name}/b.bias"] = pair.second.bias
        battrs["bias"] = f"{name}/b.bias"
    return [a, LayerSpec(f"{name}/b", "pointwise", battrs)], tensors


def _spatial_layers(name: str, pair: SpatialPair) -> tuple[list[LayerSpec], dict]:
    tensors: dict = {}
    a = _conv_layerspec(f"{name}/a", pair.horizontal, tensors)
    b = _conv_layerspec(f"{name}/b", pair.vertical, tensors)
    return [a, b], tensors


def apply_plan(
    model: ModelGraph, plan: DecompositionPlan
) -> tuple[ModelGraph, DecompositionReport]:
    """Replace each planned conv layer by its scheme's layer pair.

    Untouched layers and tensors are carried over unchanged. The report
    records per-layer weight-space error and the model-wide MAC totals
    before and after."""
    validate_plan(model, plan)
    by_name = {e.layer: e for e in plan.entries}
    shapes = {s.name: sh for s, sh in zip(model.layers, infer_shapes(model))}

    new_layers: list[LayerSpec] = []
    new_tensors: dict[str, np.ndarray] = {}
    records: list[LayerRecord] = []
    for spec in model.layers:
        entry = by_name.get(spec.name)
        if entry is None:
            new_layers.append(spec)
            for role in ("weights", "bias"):
                tname = spec.attrs.get(role)
                if tname:
                    new_tensors[tname] = model.tensors[tname]
            continue

        layer = _conv_weights(model, spec)
        norm = frobenius_norm(layer.weights)
        if entry.scheme == "dac":
            pair = dac_decompose(layer, entry.rank)
            replacement, tensors = _dac_layers(spec.name, pair)
            err = pair.reconstruction_error
        elif entry.scheme == "channel":
            cpair = channel_decompose(layer, entry.rank)
            replacement, tensors = _channel_layers(spec.name, cpair)
            err = cpair.reconstruction_error
        else:
            spair = spatial_decompose(layer, entry.rank)
            replacement, tensors = _spatial_layers(spec.name, spair)
            err = spair.reconstruction_error
        new_layers.extend(replacement)
        new_tensors.update(tensors)
        records.append(
            LayerRecord(
                name=spec.name,
                scheme=entry.scheme,
                rank=entry.rank,
                frobenius_error=err,
                relative_error=err / norm if norm > 0 else 0.0,
                macs_before=shapes[spec.name][2],
                macs_after=0,  # filled below from the new graph
            )
        )

    out = ModelGraph(input_shape=model.input_shape, layers=new_layers, tensors=new_tensors)
    validate_model(out)

    after_by_layer = {s.name: sh[2] for s, sh in zip(out.layers, infer_shapes(out))}
    for rec in records:
        rec.macs_after = after_by_layer[f"{rec.name}/a"] + after_by_layer[f"{rec.name}/b"]
    report = DecompositionReport(
        records=records,
        total_macs_before=count_macs(model).total,
        total_macs_after=count_macs(out).total,
    )
    return out, report


# ---------------------------------------------------------------------------
# verification


def verify_models(a: ModelGraph, b: ModelGraph, n_inputs: int, seed: int) -> dict:
    """Compare two models on deterministic uniform [-1, 1) inputs.

    Returns max absolute output difference, mean relative L2 difference,
    and top-1 (argmax) agreement in percent."""
    if tuple(a.input_shape) != tuple(b.input_shape):
        raise ValidationError(
            f"input shapes differ: {a.input_shape} vs {b.input_shape}"
        )
    rng = Xorshift64Star(seed)
    max_abs = 0.0
    rel_sum = 0.0
    agree = 0
    for _ in range(n_inputs):
        x = rng.uniform(tuple(a.input_shape))
        ya = np.asarray(run_model(a, x), dtype=np.float64).ravel()
        yb = np.asarray(run_model(b, x), dtype=np.float64).ravel()
        if ya.shape != yb.shape:
            raise ValidationError(f"output shapes differ: {ya.shape} vs {yb.shape}")
        diff = np.abs(ya - yb)
        max_abs = max(max_abs, float(diff.max(initial=0.0)))
        rel_sum += float(np.linalg.norm(ya - yb) / (np.linalg.norm(ya) + 1e-12))
        agree += int(np.argmax(ya) == np.argmax(yb))
    return {
        "inputs": n_inputs,
        "max_abs_diff": max_abs,
        "mean_rel_diff": rel_sum / n_inputs if n_inputs else 0.0,
        "top1_agreement": 100.0 * agree / n_inputs if n_inputs else 100.0,
    }
