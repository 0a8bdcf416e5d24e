"""End-to-end RIS-aided autoencoder link.

Signal path for one channel use::

    s -> encoder -> power normalize -> x
    x_ris = h_tr * x                       (signal at the RIS elements)
    y_ris = psi * kappa * x_ris            (passive 1-bit reflection)
    y     = h_ri^T y_ris + n               (AWGN at the receiver)
    s_hat = argmax decoder([Re y, Im y])

The beam selector sees ``[Re x, Im x, Re/Im h_ri]`` and outputs a softmax
over the codebook. During training the reflected signal uses the convex
combination ``sum_p w_p psi_p`` (``soft``), the argmax codeword with a
straight-through gradient (``hard_straight_through``), or the exhaustive
oracle codeword (``oracle_only``). Inference always uses a single codeword.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional, Sequence

import numpy as np

from . import neural
from .channel import Channel, Geometry, make_channel
from .neural import MlpParams
from .numerics import RngStream, db_to_linear_amplitude, db_to_linear_power
from .ris import Codebook, apply_ris, beam_responses, build_codebook, rank_beams

log = logging.getLogger(__name__)

SELECTOR_MODES = ("soft", "hard_straight_through", "oracle_only")
ENCODER_INPUTS = ("one_hot", "scalar")
CHECKPOINT_FORMAT = 1

# stream ids for the independent random streams of one experiment
STREAM_INIT = 1
STREAM_TRAIN = 2


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class Scenario:
    """Frozen propagation setup: geometry, codebook and both RIS channels."""

    geometry: Geometry
    codebook: Codebook
    h_tr: Channel
    h_ri: Channel
    kappa: float
    k_bits: int = 2

    def __post_init__(self):
        if self.k_bits < 1:
            raise ValueError("k_bits must be >= 1")
        if not 0 < self.kappa <= 1:
            raise ValueError("kappa must be in (0, 1]")
        n = self.codebook.n_elements
        if self.h_tr.n_elements != n or self.h_ri.n_elements != n:
            raise ValueError("channels and codebook disagree on the number of RIS elements")

    @classmethod
    def standard(cls, geometry: Geometry = Geometry(), codebook_size: int = 32,
                 angle_range_deg: tuple[float, float] = (100.0, 160.0), kappa_db: float = 3.0,
                 k_bits: int = 2, gain_tr: float = 1.0, gain_ri: float = 1.0) -> "Scenario":
        codebook = build_codebook(geometry, geometry.incident_azimuth_deg, *angle_range_deg, codebook_size)
        return cls(
            geometry=geometry,
            codebook=codebook,
            h_tr=make_channel(geometry, geometry.incident_azimuth_deg, gain_tr),
            h_ri=make_channel(geometry, geometry.receiver_azimuth_deg, gain_ri),
            kappa=float(db_to_linear_amplitude(-kappa_db)),
            k_bits=k_bits,
        )

    @property
    def n_messages(self) -> int:
        return 2**self.k_bits

    @cached_property
    def responses(self) -> np.ndarray:
        """Complex gain ``kappa (h_tr * h_ri)^T psi_p`` for every codeword."""
        return beam_responses(self.h_tr, self.h_ri, self.codebook, self.kappa)

    @cached_property
    def ranked_beams(self) -> np.ndarray:
        return rank_beams(self.h_tr, self.h_ri, self.codebook, self.kappa)

    @property
    def oracle_beam(self) -> int:
        return int(self.ranked_beams[0])

    @property
    def best_gain(self) -> float:
        """Receive power gain of the best codeword (includes ``kappa**2``)."""
        return float(np.abs(self.responses[self.oracle_beam]) ** 2)


@dataclass(frozen=True)
class ModelShape:
    encoder_hidden: tuple[int, ...] = (256, 256)
    selector_hidden: tuple[int, ...] = (400, 400, 400, 400)
    decoder_hidden: tuple[int, ...] = (1024, 1024, 1024)
    encoder_input: str = "one_hot"

    def __post_init__(self):
        if self.encoder_input not in ENCODER_INPUTS:
            raise ValueError(f"encoder_input must be one of {ENCODER_INPUTS}")


@dataclass
class EndToEndModel:
    encoder: MlpParams
    selector: MlpParams
    decoder: MlpParams
    scenario: Scenario
    encoder_input: str = "one_hot"

    def __post_init__(self):
        sc = self.scenario
        if self.encoder.output_width != 2:
            raise ValueError("encoder must output one complex symbol (2 reals)")
        if self.decoder.output_width != sc.n_messages or self.decoder.input_width != 2:
            raise ValueError("decoder must map 2 reals to 2**k classes")
        if self.selector.output_width != len(sc.codebook):
            raise ValueError("selector output width must equal the codebook size")
        if self.selector.input_width != 2 + 2 * sc.codebook.n_elements:
            raise ValueError("selector input width must be 2 + 2N")
        expected_in = sc.n_messages if self.encoder_input == "one_hot" else 1
        if self.encoder.input_width != expected_in:
            raise ValueError(f"encoder input width must be {expected_in} for {self.encoder_input} input")

    # attribute names used in the model description
    codebook = property(lambda self: self.scenario.codebook)
    h_tr = property(lambda self: self.scenario.h_tr)
    h_ri = property(lambda self: self.scenario.h_ri)
    kappa = property(lambda self: self.scenario.kappa)
    k = property(lambda self: self.scenario.k_bits)

    def networks(self) -> tuple[MlpParams, MlpParams, MlpParams]:
        return self.encoder, self.selector, self.decoder


def init_model(scenario: Scenario, shape: ModelShape = ModelShape(), rng: Optional[RngStream] = None,
               seed: int = 0) -> EndToEndModel:
    rng = rng or RngStream(seed, STREAM_INIT)
    n_in = scenario.n_messages if shape.encoder_input == "one_hot" else 1
    enc = MlpParams.initialize(neural.mlp_specs(n_in, shape.encoder_hidden, 2, "linear"), rng)
    sel = MlpParams.initialize(neural.mlp_specs(2 + 2 * scenario.codebook.n_elements, shape.selector_hidden,
                                                len(scenario.codebook), "softmax"), rng)
    dec = MlpParams.initialize(neural.mlp_specs(2, shape.decoder_hidden, scenario.n_messages, "softmax"), rng)
    return EndToEndModel(enc, sel, dec, scenario, shape.encoder_input)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 512
    iterations: int = 20_000
    learning_rate: float = 1e-3
    lr_final: Optional[float] = None  # exponential decay target; None keeps the rate constant
    train_snr_range_db: tuple[float, float] = (0.0, 20.0)
    beam_loss_weight: float = 1.0
    selector_mode: str = "soft"
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2 (normalization averages over the batch)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not self.learning_rate > 0 or (self.lr_final is not None and not self.lr_final > 0):
            raise ValueError("learning rates must be positive")
        lo, hi = self.train_snr_range_db
        if lo > hi:
            raise ValueError("train_snr_range_db must satisfy lo <= hi")
        if self.beam_loss_weight < 0:
            raise ValueError("beam_loss_weight must be >= 0")
        if self.selector_mode not in SELECTOR_MODES:
            raise ValueError(f"selector_mode must be one of {SELECTOR_MODES}")

    def learning_rate_at(self, step: int) -> float:
        if self.lr_final is None or self.iterations == 1:
            return self.learning_rate
        frac = step / (self.iterations - 1)
        return self.learning_rate * (self.lr_final / self.learning_rate) ** frac


@dataclass(frozen=True)
class BeamPolicy:
    """Codeword choice at evaluation time.

    ``best`` uses the top-ranked codeword, ``top_k`` draws uniformly among
    the ``k_param`` highest-gain codewords per symbol and ``uniform_random``
    draws from the whole codebook.
    """

    kind: str = "best"
    k_param: int = 1

    def __post_init__(self):
        if self.kind not in ("best", "top_k", "uniform_random"):
            raise ValueError(f"unknown beam policy {self.kind!r}")
        if self.k_param < 1:
            raise ValueError("K must be >= 1")
        if self.kind == "best" and self.k_param != 1:
            raise ValueError("best policy implies K = 1")

    @classmethod
    def best(cls):
        return cls("best", 1)

    @classmethod
    def top_k(cls, k: int):
        return cls("top_k", int(k))

    @classmethod
    def uniform_random(cls):
        return cls("uniform_random", 1)

    def effective_k(self, codebook_size: int) -> int:
        if self.kind == "uniform_random":
            return codebook_size
        if self.k_param > codebook_size:
            raise ValueError(f"K = {self.k_param} exceeds codebook size {codebook_size}")
        return self.k_param

    def draw(self, ranked: np.ndarray, n: int, rng: RngStream) -> np.ndarray:
        k = self.effective_k(len(ranked))
        return ranked[rng.integers(0, k, n)]


# ---------------------------------------------------------------- pieces

def _check_messages(model: EndToEndModel, messages) -> np.ndarray:
    m = np.asarray(messages, dtype=np.int64).reshape(-1)
    if m.size and (m.min() < 0 or m.max() >= model.scenario.n_messages):
        raise ValueError(f"message values must lie in [0, {model.scenario.n_messages})")
    return m


def encoder_features(messages: np.ndarray, n_messages: int, mode: str = "one_hot") -> np.ndarray:
    if mode == "one_hot":
        return neural.one_hot(messages, n_messages)
    return np.asarray(messages, dtype=np.float64).reshape(-1, 1)


def encode(model: EndToEndModel, messages) -> np.ndarray:
    """Normalized transmit symbols for a batch of messages.

    The network runs once per distinct message; normalization uses the
    whole batch, so the mean symbol power of the returned batch is one.
    """
    m = _check_messages(model, messages)
    uniq, inverse = np.unique(m, return_inverse=True)
    raw = neural.predict(model.encoder, encoder_features(uniq, model.scenario.n_messages, model.encoder_input))
    x_raw = (raw[:, 0] + 1j * raw[:, 1])[inverse]
    x, _ = neural.power_normalize(x_raw)
    return x


def constellation(model: EndToEndModel) -> np.ndarray:
    """One normalized point per message, for a batch holding each message once."""
    return encode(model, np.arange(model.scenario.n_messages))


def build_selector_input(x, h_ri: Channel) -> np.ndarray:
    """``[Re x, Im x, Re h0, Im h0, ..., Re h_{N-1}, Im h_{N-1}]`` per symbol."""
    x = np.atleast_1d(np.asarray(x, dtype=np.complex128))
    h = h_ri.vector
    out = np.empty((x.size, 2 + 2 * h.size))
    out[:, 0] = x.real
    out[:, 1] = x.imag
    out[:, 2::2] = h.real
    out[:, 3::2] = h.imag
    return out


def select_beam(model: EndToEndModel, selector_input: np.ndarray, mode: str = "soft"):
    """Selector weights over the codebook and the hard (argmax) choice per row."""
    selector_input = np.atleast_2d(selector_input)
    if mode == "oracle_only":
        idx = np.full(selector_input.shape[0], model.scenario.oracle_beam)
        return neural.one_hot(idx, len(model.codebook)), idx
    if mode not in SELECTOR_MODES:
        raise ValueError(f"unknown selector mode {mode!r}")
    weights = neural.predict(model.selector, selector_input)
    return weights, np.argmax(weights, axis=1)


def calibrate_snr(model_or_scenario, snr_db) -> float:
    """Noise variance at which the best-beam receive SNR equals ``snr_db`` (unit transmit power)."""
    sc = getattr(model_or_scenario, "scenario", model_or_scenario)
    return sc.best_gain / db_to_linear_power(snr_db)


# --------------------------------------------------------- forward chain

def forward_chain(model: EndToEndModel, messages, sigma_sq, rng: RngStream,
                  beam_policy: BeamPolicy = BeamPolicy.best(), training_mode: bool = False,
                  selector_mode: str = "soft"):
    """Run the full link, element by element.

    In training mode the codeword comes from the selector according to
    ``selector_mode``; otherwise ``beam_policy`` picks one codeword per
    symbol. Returns ``(decoder_probs, hard_beam_index, intermediates)``.
    """
    sc = model.scenario
    m = _check_messages(model, messages)
    x = encode(model, m)
    sel_in = build_selector_input(x, sc.h_ri)
    if training_mode:
        weights, hard = select_beam(model, sel_in, selector_mode)
        if selector_mode != "soft":
            weights = neural.one_hot(hard, len(sc.codebook))
    else:
        hard = beam_policy.draw(sc.ranked_beams, m.size, rng)
        weights = neural.one_hot(hard, len(sc.codebook))
    psi = weights @ sc.codebook.codewords
    x_ris = x[:, None] * sc.h_tr.vector[None, :]
    y_ris = apply_ris(x_ris, psi, sc.kappa)
    y_signal = y_ris @ sc.h_ri.vector
    sigma_sq = np.broadcast_to(np.asarray(sigma_sq, dtype=np.float64), m.shape)
    if np.any(sigma_sq < 0):
        raise ValueError("noise variance must be non-negative")
    noise = np.sqrt(sigma_sq / 2.0) * rng.standard_normal(2 * m.size).view(np.complex128)
    y = y_signal + noise
    probs = neural.predict(model.decoder, np.column_stack([y.real, y.imag]))
    intermediates = dict(x=x, selector_weights=weights, psi=psi, x_ris=x_ris, y_ris=y_ris,
                         y_signal=y_signal, y=y)
    return probs, hard, intermediates


@dataclass
class LossBreakdown:
    total: float
    symbol: float
    beam: float


def loss_and_grads(model: EndToEndModel, messages: np.ndarray, sigma_sq: np.ndarray, noise: np.ndarray,
                   selector_mode: str = "soft", beam_loss_weight: float = 1.0,
                   on_batch: Optional[Callable[[np.ndarray], None]] = None, need_grads: bool = True):
    """Training loss and exact gradients for all three networks.

    ``noise`` is a unit-variance complex draw (one per message) scaled by
    ``sqrt(sigma_sq)``; the noise layer is the identity in the backward pass.
    Returns ``(LossBreakdown, [enc_grads, sel_grads, dec_grads])``; selector
    gradients are ``None`` when the selector is not used at all. With
    ``need_grads=False`` only the loss is computed and the gradient list is
    ``None``.
    """
    sc = model.scenario
    m = messages
    M = m.size
    resp = sc.responses
    oracle = sc.oracle_beam

    # loss-only calls skip the activation caches
    fwd = neural.forward if need_grads else (lambda net, inp: (neural.predict(net, inp), None))
    enc_out, enc_cache = fwd(model.encoder, encoder_features(m, sc.n_messages, model.encoder_input))
    x, norm_cache = neural.power_normalize(enc_out[:, 0] + 1j * enc_out[:, 1])
    if on_batch is not None:
        on_batch(x)

    use_selector = selector_mode != "oracle_only" or beam_loss_weight > 0
    if use_selector:
        w, sel_cache = fwd(model.selector, build_selector_input(x, sc.h_ri))
        beam_loss = neural.cross_entropy(w, np.full(M, oracle))
    else:
        w, beam_loss = None, float("nan")

    if selector_mode == "soft":
        mix = w
    elif selector_mode == "hard_straight_through":
        mix = neural.one_hot(np.argmax(w, axis=1), len(sc.codebook))
    else:
        mix = neural.one_hot(np.full(M, oracle), len(sc.codebook))
    gain = mix @ resp  # complex gain seen by each symbol
    y = gain * x + np.sqrt(sigma_sq) * noise

    probs, dec_cache = fwd(model.decoder, np.column_stack([y.real, y.imag]))
    symbol_loss = neural.cross_entropy(probs, m)
    total = symbol_loss + (beam_loss_weight * beam_loss if use_selector else 0.0)
    if not need_grads:
        return LossBreakdown(total, symbol_loss, beam_loss), None

    dec_grads, g_in = neural.backward(model.decoder, dec_cache,
                                      neural.softmax_cross_entropy_grad(probs, m), wrt_logits=True)
    g_y = g_in[:, 0] + 1j * g_in[:, 1]
    g_x = np.conj(gain) * g_y

    sel_grads = None
    if use_selector:
        g_logits = beam_loss_weight * neural.softmax_cross_entropy_grad(w, np.full(M, oracle))
        if selector_mode != "oracle_only":
            # d loss / d mixing weight p = Re(conj(g_y) * resp_p * x)
            g_w = np.real(np.conj(g_y)[:, None] * resp[None, :] * x[:, None])
            g_logits = g_logits + neural.softmax_backward(w, g_w)
        sel_grads, g_sel_in = neural.backward(model.selector, sel_cache, g_logits, wrt_logits=True)
        g_x = g_x + g_sel_in[:, 0] + 1j * g_sel_in[:, 1]

    g_raw = neural.power_normalize_backward(g_x, norm_cache)
    enc_grads, _ = neural.backward(model.encoder, enc_cache, np.column_stack([g_raw.real, g_raw.imag]))
    return LossBreakdown(total, symbol_loss, beam_loss), [enc_grads, sel_grads, dec_grads]


# --------------------------------------------------------------- training

def train(config: TrainConfig, scenario: Scenario, shape: ModelShape = ModelShape(),
          on_batch: Optional[Callable[[np.ndarray], None]] = None,
          log_every: int = 0) -> tuple[EndToEndModel, np.ndarray]:
    """Jointly train encoder, selector and decoder.

    Each iteration draws uniform messages and a per-example SNR uniform in
    ``train_snr_range_db``; noise variance follows :func:`calibrate_snr`.
    Returns the model and a ``(iterations, 3)`` history of total, symbol and
    beam loss.
    """
    model = init_model(scenario, shape, seed=config.seed)
    rng = RngStream(config.seed, STREAM_TRAIN)
    states = [neural.AdamState.for_params(net, config.learning_rate) for net in model.networks()]
    lo, hi = config.train_snr_range_db
    M = config.batch_size
    history = np.empty((config.iterations, 3))

    for it in range(config.iterations):
        messages = rng.integers(0, scenario.n_messages, M)
        snr_db = lo + (hi - lo) * rng.uniform(M)
        sigma_sq = scenario.best_gain / db_to_linear_power(snr_db)
        noise = rng.standard_normal(2 * M).view(np.complex128) / math.sqrt(2.0)

        loss, grads = loss_and_grads(model, messages, sigma_sq, noise, config.selector_mode,
                                     config.beam_loss_weight, on_batch)
        if not np.isfinite(loss.total):
            raise TrainingDiverged(
                f"non-finite loss at iteration {it}: total={loss.total}, symbol={loss.symbol}, beam={loss.beam}")
        history[it] = loss.total, loss.symbol, loss.beam

        lr = config.learning_rate_at(it)
        for net, state, g in zip(model.networks(), states, grads):
            if g is None:
                continue
            state.learning_rate = lr
            neural.adam_step(state, net, g)
        if log_every and (it % log_every == 0 or it == config.iterations - 1):
            log.info("iter %d loss %.5f (symbol %.5f, beam %.5f) lr %.2e", it, *history[it], lr)
    return model, history


# ------------------------------------------------------------- evaluation

DEFAULT_CHUNK = 65_536


def _chunk_sizes(n: int, chunk_size: int) -> list[int]:
    n_chunks = max(1, math.ceil(n / chunk_size))
    base, extra = divmod(n, n_chunks)
    return [base + (1 if i < extra else 0) for i in range(n_chunks)]


def count_errors_chunk(model: EndToEndModel, n: int, sigma_sq: float, beam_policy: BeamPolicy,
                       rng: RngStream, on_batch: Optional[Callable[[np.ndarray], None]] = None) -> int:
    """Symbol errors over one batch of ``n`` random messages (hard codeword per symbol)."""
    sc = model.scenario
    messages = rng.integers(0, sc.n_messages, n)
    beams = beam_policy.draw(sc.ranked_beams, n, rng)
    noise = rng.standard_normal(2 * n).view(np.complex128) * math.sqrt(sigma_sq / 2.0)
    x = encode(model, messages)
    if on_batch is not None:
        on_batch(x)
    y = sc.responses[beams] * x + noise
    probs = neural.predict(model.decoder, np.column_stack([y.real, y.imag]))
    return int(np.count_nonzero(np.argmax(probs, axis=1) != messages))


def evaluate_ser(model: EndToEndModel, snr_db: float, n_symbols: int, beam_policy: BeamPolicy,
                 rng: RngStream, workers: int = 1, chunk_size: int = DEFAULT_CHUNK,
                 on_batch: Optional[Callable[[np.ndarray], None]] = None) -> tuple[float, int, int]:
    """Monte Carlo symbol error rate at a calibrated SNR.

    Symbols are split into fixed chunks; chunk ``j`` draws from
    ``rng.child(j)``, so counts do not depend on ``workers``.
    """
    if n_symbols < 1:
        raise ValueError("n_symbols must be >= 1")
    sigma_sq = calibrate_snr(model, snr_db)
    sizes = _chunk_sizes(int(n_symbols), chunk_size)

    def run(j):
        return count_errors_chunk(model, sizes[j], sigma_sq, beam_policy, rng.child(j), on_batch)

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            errors = sum(pool.map(run, range(len(sizes))))
    else:
        errors = sum(run(j) for j in range(len(sizes)))
    return errors / n_symbols, errors, int(n_symbols)


def selector_agreement(model: EndToEndModel, n_symbols: int, rng: RngStream) -> float:
    """Fraction of random transmit symbols for which the selector's argmax is the oracle beam."""
    messages = rng.integers(0, model.scenario.n_messages, n_symbols)
    x = encode(model, messages)
    _, hard = select_beam(model, build_selector_input(x, model.h_ri), "soft")
    return float(np.mean(hard == model.scenario.oracle_beam))


# ------------------------------------------------------------ checkpoints

def save_model(path, model: EndToEndModel):
    sc = model.scenario
    g = sc.geometry
    meta = dict(
        format=CHECKPOINT_FORMAT,
        geometry=[g.n_elements, g.spacing_wavelengths, g.incident_azimuth_deg, g.receiver_azimuth_deg,
                  g.elevation_deg],
        kappa=sc.kappa.hex(),
        k_bits=sc.k_bits,
        gains=[sc.h_tr.gain.hex(), sc.h_ri.gain.hex()],
        incident_angle_deg=sc.codebook.incident_angle_deg.hex(),
        encoder_input=model.encoder_input,
    )
    arrays = {"meta": np.array(json.dumps(meta, sort_keys=True)),
              "codebook/codewords": sc.codebook.codewords,
              "codebook/angles": sc.codebook.target_angles_deg,
              "h_tr/response": sc.h_tr.response,
              "h_ri/response": sc.h_ri.response}
    for name, net in zip(("encoder", "selector", "decoder"), model.networks()):
        arrays.update(neural.params_to_dict(name, net))
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_model(path) -> EndToEndModel:
    with np.load(path) as data:
        meta = json.loads(str(data["meta"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format {meta.get('format')}")
        n, spacing, inc, rec, elev = meta["geometry"]
        geometry = Geometry(int(n), spacing, inc, rec, elev)
        codebook = Codebook(data["codebook/codewords"], data["codebook/angles"],
                            float.fromhex(meta["incident_angle_deg"]))
        gtr, gri = (float.fromhex(v) for v in meta["gains"])
        scenario = Scenario(geometry, codebook, Channel(gtr, np.array(data["h_tr/response"])),
                            Channel(gri, np.array(data["h_ri/response"])), float.fromhex(meta["kappa"]),
                            int(meta["k_bits"]))
        nets = [neural.params_from_dict(name, data) for name in ("encoder", "selector", "decoder")]
    return EndToEndModel(*nets, scenario=scenario, encoder_input=meta["encoder_input"])
