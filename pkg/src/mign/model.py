"""Encoder-processor-decoder network over a HEALPix latent mesh.

Stations are interpolated onto mesh nodes (encoder), mesh nodes exchange
messages over their kNN graph (processor) and each target station reads
from its nearest mesh nodes (decoder). All stages carry hand-written
backward passes so gradients are exact for float64.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from functools import cached_property

import numpy as np

from .geo import knn_edges
from .healpix import build_mesh, mesh_graph
from .nn import Mlp, ShapeError, aggregate, aggregate_backward, scatter_add
from .sh import basis_size, sh_basis_array
from .snapshot import Sample, StationSnapshot

DECODER_LOCATIONS = ("sh", "raw", "none")


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 64
    n_layers: int = 2
    mesh_level: int = 3
    k_station_mesh: int = 10
    k_mesh_mesh: int = 10
    sh_degree: int = 2
    mlp_layers: int = 2
    activation: str = "silu"
    aggregation: str = "mean"
    encoder_sh: bool = True
    processor_sh: bool = True
    decoder_location: str = "sh"
    edge_distance: bool = False
    use_mesh: bool = True
    input_steps: int = 1
    output_steps: int = 1
    temporal_head: bool = False

    def __post_init__(self):
        if self.hidden < 1 or self.n_layers < 0 or self.mlp_layers < 1:
            raise ModelError("hidden >= 1, n_layers >= 0 and mlp_layers >= 1 required")
        if self.k_station_mesh < 1 or self.k_mesh_mesh < 1:
            raise ModelError("neighbor counts must be >= 1")
        if self.decoder_location not in DECODER_LOCATIONS:
            raise ModelError(f"decoder_location must be one of {DECODER_LOCATIONS}")
        if self.aggregation not in ("mean", "sum", "max"):
            raise ModelError(f"unknown aggregation {self.aggregation!r}")
        if self.input_steps < 1 or self.output_steps < 1:
            raise ModelError("input_steps and output_steps must be >= 1")
        if self.multistep and not self.use_mesh:
            raise ModelError("the temporal head needs the fixed mesh (use_mesh=True)")

    @property
    def multistep(self) -> bool:
        return self.temporal_head or self.input_steps > 1 or self.output_steps > 1

    @property
    def n_basis(self) -> int:
        return basis_size(self.sh_degree)

    def without_sh(self) -> "ModelConfig":
        return replace(self, encoder_sh=False, processor_sh=False, decoder_location="none")


@dataclass(frozen=True)
class LatentGraph:
    """Latent node set (mesh nodes, or stations when the mesh is disabled)."""

    lon: np.ndarray
    lat: np.ndarray
    basis: np.ndarray
    neighbors: np.ndarray
    distances: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.lon.size


@dataclass(frozen=True)
class PreparedInput:
    x: np.ndarray
    basis: np.ndarray
    enc_neighbors: np.ndarray
    latent: LatentGraph


@dataclass(frozen=True)
class PreparedTarget:
    neighbors: np.ndarray
    y: np.ndarray | None = None


@dataclass(frozen=True)
class PreparedSample:
    inputs: tuple[PreparedInput, ...]
    targets: tuple[PreparedTarget, ...]


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Every parameter tensor in declared (checkpoint) order."""
    H, S = cfg.hidden, cfg.n_basis
    shapes: dict[str, tuple[int, ...]] = {}

    def mlp(prefix, n_in, n_out):
        dims = [n_in] + [H] * (cfg.mlp_layers - 1) + [n_out]
        for i in range(cfg.mlp_layers):
            shapes[f"{prefix}.{i}.W"] = (dims[i], dims[i + 1])
            shapes[f"{prefix}.{i}.b"] = (dims[i + 1],)

    mlp("enc", 1 + (S if cfg.encoder_sh else 0), H)
    if cfg.encoder_sh:
        shapes["sh_enc"] = (S,)
    width = H + (S if cfg.processor_sh else 0)
    if cfg.processor_sh:
        shapes["sh_proc"] = (S,)
    for layer in range(1, cfg.n_layers + 1):
        mlp(f"proc.{layer}.msg", 2 * width + (1 if cfg.edge_distance else 0), H)
        mlp(f"proc.{layer}.upd", width + H, H)
        width = H
    if cfg.n_layers == 0:
        shapes["proc.proj.W"] = (width, H)
        shapes["proc.proj.b"] = (H,)
    extra = {"sh": S, "raw": 2, "none": 0}[cfg.decoder_location]
    mlp("dec", H + extra, 1)
    if cfg.decoder_location == "sh":
        shapes["sh_dec"] = (S,)
    if cfg.multistep:
        shapes["temporal.W"] = (cfg.input_steps * H, cfg.output_steps * H)
        shapes["temporal.b"] = (cfg.output_steps * H,)
    return shapes


class MignModel:
    """Parameters, normalization statistics and cached mesh geometry."""

    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray],
                 norm_mean: float = 0.0, norm_std: float = 1.0):
        shapes = param_shapes(config)
        if list(params) != list(shapes):
            raise ModelError(f"parameter names do not match config: {sorted(set(params) ^ set(shapes))}")
        for name, shape in shapes.items():
            if params[name].shape != shape:
                raise ModelError(f"{name}: shape {params[name].shape} != {shape}")
        self.config = config
        self.params = params
        self.norm_mean = float(norm_mean)
        self.norm_std = float(norm_std)

    @classmethod
    def init(cls, config: ModelConfig, seed: int = 0, norm_mean: float = 0.0,
             norm_std: float = 1.0) -> "MignModel":
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in param_shapes(config).items():
            if name.startswith("sh_"):
                params[name] = np.ones(shape)
            elif name.endswith(".W"):
                params[name] = _uniform(rng, shape[0], shape)
            else:
                w_shape = param_shapes(config)[name[:-1] + "W"]
                params[name] = _uniform(rng, w_shape[0], shape)
        return cls(config, params, norm_mean, norm_std)

    def copy(self) -> "MignModel":
        return MignModel(self.config, {k: v.copy() for k, v in self.params.items()},
                         self.norm_mean, self.norm_std)

    def mlp(self, prefix: str) -> Mlp:
        n = self.config.mlp_layers
        return Mlp([self.params[f"{prefix}.{i}.W"] for i in range(n)],
                   [self.params[f"{prefix}.{i}.b"] for i in range(n)],
                   self.config.activation)

    @property
    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())

    def hyperparams(self) -> dict:
        return asdict(self.config)

    # geometry ------------------------------------------------------------

    @cached_property
    def mesh(self):
        return build_mesh(self.config.mesh_level)

    @cached_property
    def mesh_latent(self) -> LatentGraph:
        mesh = self.mesh
        edges = mesh_graph(mesh, self.config.k_mesh_mesh)
        basis = sh_basis_array(mesh.lon, mesh.lat, self.config.sh_degree)
        return LatentGraph(mesh.lon, mesh.lat, basis, edges.neighbors, edges.distances)

    def normalize(self, values):
        return (np.asarray(values, dtype=float) - self.norm_mean) / self.norm_std

    def denormalize(self, values):
        return np.asarray(values, dtype=float) * self.norm_std + self.norm_mean

    def prepare_input(self, snap: StationSnapshot) -> PreparedInput:
        if len(snap) == 0:
            raise ModelError(f"empty input snapshot for {snap.date}")
        cfg = self.config
        basis = sh_basis_array(snap.lon, snap.lat, cfg.sh_degree)
        if cfg.use_mesh:
            latent = self.mesh_latent
            enc = knn_edges((snap.lon, snap.lat), (latent.lon, latent.lat), cfg.k_station_mesh)
            enc_nbr = enc.neighbors
        else:
            if len(snap) < 2:
                raise ModelError("station-graph mode needs at least 2 input stations")
            g = knn_edges((snap.lon, snap.lat), (snap.lon, snap.lat), cfg.k_mesh_mesh,
                          exclude_self=True)
            latent = LatentGraph(snap.lon, snap.lat, basis, g.neighbors, g.distances)
            enc_nbr = np.arange(len(snap))[:, None]
        return PreparedInput(self.normalize(snap.values), basis, enc_nbr, latent)

    def prepare_target(self, lon, lat, latent: LatentGraph, values=None) -> PreparedTarget:
        lon = np.asarray(lon, dtype=float).reshape(-1)
        if lon.size == 0:
            raise ModelError("empty target set")
        edges = knn_edges((latent.lon, latent.lat), (lon, lat), self.config.k_station_mesh)
        y = None if values is None else self.normalize(values)
        return PreparedTarget(edges.neighbors, y)

    def prepare_sample(self, sample: Sample) -> PreparedSample:
        cfg = self.config
        if len(sample.inputs) != cfg.input_steps or len(sample.targets) != cfg.output_steps:
            raise ModelError(f"sample has {len(sample.inputs)} in / {len(sample.targets)} out steps; "
                             f"model expects {cfg.input_steps} / {cfg.output_steps}")
        inputs = tuple(self.prepare_input(s) for s in sample.inputs)
        latent = inputs[-1].latent
        targets = tuple(self.prepare_target(t.lon, t.lat, latent, t.values) for t in sample.targets)
        return PreparedSample(inputs, targets)


# stages --------------------------------------------------------------------


def _add(grads, name, g):
    if name in grads:
        grads[name] += g
    else:
        grads[name] = g.copy() if isinstance(g, np.ndarray) else np.asarray(g, dtype=float)


def _add_mlp(grads, prefix, gws, gbs):
    for i, (gw, gb) in enumerate(zip(gws, gbs)):
        _add(grads, f"{prefix}.{i}.W", gw)
        _add(grads, f"{prefix}.{i}.b", gb)


def encode_stage(model: MignModel, inp: PreparedInput):
    cfg = model.config
    parts = [inp.x[:, None]]
    if cfg.encoder_sh:
        parts.append(inp.basis * model.params["sh_enc"])
    mlp = model.mlp("enc")
    msg, mcache = mlp.forward(np.concatenate(parts, axis=1))
    state, arg = aggregate(msg[inp.enc_neighbors], cfg.aggregation)
    return state, (mcache, arg, msg.shape[0])


def encode_backward(model: MignModel, inp: PreparedInput, cache, g_state, grads):
    cfg = model.config
    mcache, arg, n_src = cache
    k = inp.enc_neighbors.shape[1]
    g_edges = aggregate_backward(g_state, k, cfg.aggregation, arg)
    g_msg = scatter_add(inp.enc_neighbors, g_edges, n_src)
    g_in, gws, gbs = model.mlp("enc").backward(mcache, g_msg)
    _add_mlp(grads, "enc", gws, gbs)
    if cfg.encoder_sh:
        _add(grads, "sh_enc", (g_in[:, 1:] * inp.basis).sum(axis=0))


def process_stage(model: MignModel, state: np.ndarray, latent: LatentGraph):
    cfg = model.config
    if state.shape[0] != latent.n_nodes:
        raise ShapeError(f"state rows {state.shape[0]} != latent nodes {latent.n_nodes}")
    h = state
    if cfg.processor_sh:
        h = np.concatenate([state, latent.basis * model.params["sh_proc"]], axis=1)
    nbr = latent.neighbors
    n, k = nbr.shape
    caches = []
    for layer in range(1, cfg.n_layers + 1):
        width = h.shape[1]
        parts = [h[nbr], np.broadcast_to(h[:, None, :], (n, k, width))]
        if cfg.edge_distance:
            parts.append(latent.distances[:, :, None])
        edge_in = np.concatenate(parts, axis=2).reshape(n * k, -1)
        msg_mlp = model.mlp(f"proc.{layer}.msg")
        msg, c_msg = msg_mlp.forward(edge_in)
        m, arg = aggregate(msg.reshape(n, k, -1), cfg.aggregation)
        upd_mlp = model.mlp(f"proc.{layer}.upd")
        h_new, c_upd = upd_mlp.forward(np.concatenate([h, m], axis=1))
        caches.append((width, c_msg, arg, c_upd))
        h = h_new
    proj_in = None
    if cfg.n_layers == 0:
        proj_in = h
        h = h @ model.params["proc.proj.W"] + model.params["proc.proj.b"]
    return h, (caches, proj_in)


def process_backward(model: MignModel, latent: LatentGraph, cache, g_h, grads):
    cfg = model.config
    caches, proj_in = cache
    nbr = latent.neighbors
    n, k = nbr.shape
    if cfg.n_layers == 0:
        _add(grads, "proc.proj.W", proj_in.T @ g_h)
        _add(grads, "proc.proj.b", g_h.sum(axis=0))
        g_h = g_h @ model.params["proc.proj.W"].T
    for layer in range(cfg.n_layers, 0, -1):
        width, c_msg, arg, c_upd = caches[layer - 1]
        g_cat, gws, gbs = model.mlp(f"proc.{layer}.upd").backward(c_upd, g_h)
        _add_mlp(grads, f"proc.{layer}.upd", gws, gbs)
        g_prev = g_cat[:, :width].copy()
        g_m = g_cat[:, width:]
        g_msg = aggregate_backward(g_m, k, cfg.aggregation, arg).reshape(n * k, -1)
        g_edge, gws, gbs = model.mlp(f"proc.{layer}.msg").backward(c_msg, g_msg)
        _add_mlp(grads, f"proc.{layer}.msg", gws, gbs)
        g_edge = g_edge.reshape(n, k, -1)
        g_prev += scatter_add(nbr, g_edge[:, :, :width], n)
        g_prev += g_edge[:, :, width:2 * width].sum(axis=1)
        g_h = g_prev
    if cfg.processor_sh:
        H = cfg.hidden
        _add(grads, "sh_proc", (g_h[:, H:] * latent.basis).sum(axis=0))
        g_h = g_h[:, :H]
    return g_h


def _decoder_inputs(model: MignModel, h: np.ndarray, latent: LatentGraph) -> np.ndarray:
    loc = model.config.decoder_location
    if loc == "sh":
        return np.concatenate([h, latent.basis * model.params["sh_dec"]], axis=1)
    if loc == "raw":
        return np.concatenate([h, latent.lon[:, None], latent.lat[:, None]], axis=1)
    return h


def decode_stage(model: MignModel, h: np.ndarray, latent: LatentGraph, tgt: PreparedTarget):
    mlp = model.mlp("dec")
    out, mcache = mlp.forward(_decoder_inputs(model, h, latent))
    pred, arg = aggregate(out[tgt.neighbors], model.config.aggregation)
    return pred[:, 0], (mcache, arg)


def decode_backward(model: MignModel, latent: LatentGraph, tgt: PreparedTarget, cache, g_pred, grads):
    cfg = model.config
    mcache, arg = cache
    k = tgt.neighbors.shape[1]
    g_edges = aggregate_backward(g_pred[:, None], k, cfg.aggregation, arg)
    g_out = scatter_add(tgt.neighbors, g_edges, latent.n_nodes)
    g_in, gws, gbs = model.mlp("dec").backward(mcache, g_out)
    _add_mlp(grads, "dec", gws, gbs)
    H = cfg.hidden
    if cfg.decoder_location == "sh":
        _add(grads, "sh_dec", (g_in[:, H:] * latent.basis).sum(axis=0))
    return g_in[:, :H]


def temporal_stage(model: MignModel, states: list[np.ndarray]):
    H = model.config.hidden
    W, b = model.params["temporal.W"], model.params["temporal.b"]
    z = np.concatenate(states, axis=1)
    if z.shape[1] != W.shape[0]:
        raise ShapeError(f"temporal input width {z.shape[1]} != projection rows {W.shape[0]}")
    out = z @ W + b
    return [out[:, j * H:(j + 1) * H] for j in range(W.shape[1] // H)], z


def temporal_backward(model: MignModel, z, g_outs, grads):
    H = model.config.hidden
    g = np.concatenate(g_outs, axis=1)
    _add(grads, "temporal.W", z.T @ g)
    _add(grads, "temporal.b", g.sum(axis=0))
    g_z = g @ model.params["temporal.W"].T
    return [g_z[:, i * H:(i + 1) * H] for i in range(z.shape[1] // H)]


# whole-sample passes ---------------------------------------------------------


def sample_forward(model: MignModel, ps: PreparedSample):
    """Normalized predictions per output step plus the cache for backprop."""
    enc_caches, proc_caches, states = [], [], []
    for inp in ps.inputs:
        h0, c_enc = encode_stage(model, inp)
        h, c_proc = process_stage(model, h0, inp.latent)
        enc_caches.append(c_enc)
        proc_caches.append(c_proc)
        states.append(h)
    z = None
    if model.config.multistep:
        outs, z = temporal_stage(model, states)
    else:
        outs = states
    latent = ps.inputs[-1].latent
    preds, dec_caches = [], []
    for out, tgt in zip(outs, ps.targets):
        p, c_dec = decode_stage(model, out, latent, tgt)
        preds.append(p)
        dec_caches.append(c_dec)
    return preds, (enc_caches, proc_caches, z, dec_caches)


def sample_backward(model: MignModel, ps: PreparedSample, cache, g_preds, grads) -> None:
    enc_caches, proc_caches, z, dec_caches = cache
    latent = ps.inputs[-1].latent
    g_outs = [decode_backward(model, latent, tgt, c, g, grads)
              for tgt, c, g in zip(ps.targets, dec_caches, g_preds)]
    g_states = temporal_backward(model, z, g_outs, grads) if model.config.multistep else g_outs
    for inp, c_enc, c_proc, g in zip(ps.inputs, enc_caches, proc_caches, g_states):
        g0 = process_backward(model, inp.latent, c_proc, g, grads)
        encode_backward(model, inp, c_enc, g0, grads)


# public single-purpose API -------------------------------------------------


def encode(snapshot: StationSnapshot, model: MignModel) -> np.ndarray:
    """Mesh hidden states (n_mesh, H) interpolated from one day's stations."""
    return encode_stage(model, model.prepare_input(snapshot))[0]


def process(state: np.ndarray, model: MignModel, latent: LatentGraph | None = None) -> np.ndarray:
    return process_stage(model, state, latent or model.mesh_latent)[0]


def decode(state: np.ndarray, target_lon, target_lat, model: MignModel,
           latent: LatentGraph | None = None) -> np.ndarray:
    """Predictions in physical units at the target coordinates."""
    latent = latent or model.mesh_latent
    tgt = model.prepare_target(target_lon, target_lat, latent)
    return model.denormalize(decode_stage(model, state, latent, tgt)[0])


def forward(snapshot: StationSnapshot, target_lon, target_lat, model: MignModel) -> np.ndarray:
    """Next-day predictions (physical units) at arbitrary target coordinates."""
    if model.config.multistep:
        raise ModelError("use temporal_forward for a multistep model")
    inp = model.prepare_input(snapshot)
    h0, _ = encode_stage(model, inp)
    h, _ = process_stage(model, h0, inp.latent)
    tgt = model.prepare_target(target_lon, target_lat, inp.latent)
    return model.denormalize(decode_stage(model, h, inp.latent, tgt)[0])


def temporal_forward(snapshots: list[StationSnapshot], target_coords: list[tuple], model: MignModel):
    """Predictions for each output step; ``target_coords`` holds (lon, lat) pairs."""
    if not model.config.multistep:
        raise ModelError("model has no temporal projection")
    states = []
    for snap in snapshots:
        inp = model.prepare_input(snap)
        states.append(process_stage(model, encode_stage(model, inp)[0], inp.latent)[0])
    outs, _ = temporal_stage(model, states)
    if len(outs) != len(target_coords):
        raise ShapeError(f"{len(target_coords)} target sets for {len(outs)} output steps")
    latent = model.mesh_latent
    return [model.denormalize(decode_stage(model, o, latent, model.prepare_target(lon, lat, latent))[0])
            for o, (lon, lat) in zip(outs, target_coords)]


def predict_sample(model: MignModel, sample: Sample) -> list[np.ndarray]:
    """Physical-unit predictions at each target snapshot's stations."""
    preds, _ = sample_forward(model, model.prepare_sample(sample))
    return [model.denormalize(p) for p in preds]
