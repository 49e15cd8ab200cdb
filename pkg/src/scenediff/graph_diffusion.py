"""Discrete denoising diffusion over semantic scene graphs.

Each categorical variable (a category slot, a code slot, or a relation slot)
diffuses through an alphabet of k real labels plus empty plus mask. The
default forward kernel is mask-absorbing: at step t a surviving label is
masked with probability gamma_t = 1 / (T - t + 1), which drives the cumulative
mask probability to exactly t / T when the leak is zero and to 1 at t = T.
A small uniform leak beta_t spreads mass among the real labels so that the
chain never assigns zero likelihood to a plausible clean label.

Transition matrices are column stochastic: Q_t[i, j] = q(x_t = i | x_{t-1} = j),
the cumulative product Qbar_t = Q_t ... Q_1 gives the forward marginal of x_t
as the column Qbar_t[:, x_0].

Alternative kernels: ``uniform`` mixes the real-plus-empty labels toward the
uniform distribution on a cosine ramp; ``joint-mask`` shares one mask event
per node across its category, codes, and incident relations; and
``gaussian-embedding`` diffuses one-hot label embeddings with the Gaussian
layout machinery and tracks the induced label chain, which by symmetry of the
one-hot simplex is a uniform-structure chain whose stay probability is the
probability that the noisy embedding's argmax is unchanged.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .config import SceneConfig
from .errors import UnsatisfiableInstructionError
from .graph import SemanticGraph, empty_state, mask_state
from .instructions import Instruction, instruction_matches
from .layout_diffusion import cosine_alpha_bar
from .relations import n_pairs

KERNEL_INDEPENDENT = "independent-mask"
KERNEL_UNIFORM = "uniform"
KERNEL_JOINT = "joint-mask"
KERNEL_GAUSSIAN = "gaussian-embedding"
KERNELS = (KERNEL_INDEPENDENT, KERNEL_UNIFORM, KERNEL_JOINT, KERNEL_GAUSSIAN)
MASKING_KERNELS = (KERNEL_INDEPENDENT, KERNEL_JOINT)

TERMINAL_MASK_MIN = 0.999


@dataclass(frozen=True)
class MaskSchedule:
    """Forward schedule for one categorical variable kind.

    Attributes:
        k: number of real labels; the alphabet has k + 2 states with empty at
            index k and mask at index k + 1.
        kernel: one of KERNELS.
        alphas, betas, gammas: (T,) per-step parameters; for mask kernels a
            real label survives with alpha_t + beta_t, flips to each other
            real label with beta_t, and masks with gamma_t. Uniform-structure
            kernels store the stay weight in alphas, the per-target mix
            weight in betas, and zero gammas.
        q: (T, k + 2, k + 2) per-step column-stochastic transition matrices.
        qbar: (T + 1, k + 2, k + 2) cumulative products, qbar[0] = identity.
        freeze_empty: when True the empty state never corrupts.
    """

    k: int
    kernel: str
    alphas: np.ndarray
    betas: np.ndarray
    gammas: np.ndarray
    q: np.ndarray
    qbar: np.ndarray
    freeze_empty: bool = False

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}")
        if self.k < 1:
            raise ValueError("need at least one real label")
        for name in ("alphas", "betas", "gammas", "q", "qbar"):
            arr = np.asarray(getattr(self, name), dtype=np.float64).copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        T = self.alphas.shape[0]
        m = self.k + 2
        if self.q.shape != (T, m, m) or self.qbar.shape != (T + 1, m, m):
            raise ValueError("transition tensors disagree with T and k")
        if not np.array_equal(self.qbar[0], np.eye(m)):
            raise ValueError("qbar[0] must be the identity")
        if (self.q < -1e-15).any():
            raise ValueError("negative transition probability")
        col_sums = self.q.sum(axis=1)
        if not np.allclose(col_sums, 1.0, atol=1e-12):
            raise ValueError("transition matrices must be column stochastic")
        mask = mask_state(self.k)
        if not np.allclose(self.q[:, :, mask], np.eye(m)[mask], atol=0):
            raise ValueError("the mask state must be absorbing")

    @property
    def T(self) -> int:
        return self.alphas.shape[0]

    @property
    def n_states(self) -> int:
        return self.k + 2

    def forward_dist(self, x0: int, t: int) -> np.ndarray:
        """Marginal distribution of x_t given a clean label."""
        if not 0 <= t <= self.T:
            raise ValueError(f"t={t} outside [0, {self.T}]")
        if not 0 <= x0 < self.n_states:
            raise ValueError(f"label {x0} outside the alphabet")
        return self.qbar[t][:, x0].copy()

    def terminal_mask_mass(self) -> float:
        """Smallest cumulative mask probability over real source labels."""
        return float(self.qbar[self.T][mask_state(self.k), : self.k].min())


def _mask_step_matrix(k: int, alpha: float, beta: float, gamma: float,
                      freeze_empty: bool) -> np.ndarray:
    m = k + 2
    e, msk = empty_state(k), mask_state(k)
    q = np.zeros((m, m), dtype=np.float64)
    for j in range(k):
        q[:k, j] = beta
        q[j, j] = alpha + beta
        q[msk, j] = gamma
    if freeze_empty:
        q[e, e] = 1.0
    else:
        q[e, e] = 1.0 - gamma
        q[msk, e] = gamma
    q[msk, msk] = 1.0
    return q


def _uniform_step_matrix(k: int, stay: float, freeze_empty: bool) -> np.ndarray:
    m = k + 2
    e, msk = empty_state(k), mask_state(k)
    states = k if freeze_empty else k + 1
    q = np.zeros((m, m), dtype=np.float64)
    mix = (1.0 - stay) / states
    q[:states, :states] = mix
    q[np.arange(states), np.arange(states)] += stay
    if freeze_empty:
        q[e, e] = 1.0
    q[msk, msk] = 1.0
    return q


def _assemble_schedule(k: int, kernel: str, alphas, betas, gammas,
                       step_matrices, freeze_empty: bool,
                       check_terminal: bool = False) -> MaskSchedule:
    T = len(step_matrices)
    m = k + 2
    q = np.stack(step_matrices, axis=0)
    qbar = np.empty((T + 1, m, m), dtype=np.float64)
    qbar[0] = np.eye(m)
    for t in range(1, T + 1):
        qbar[t] = q[t - 1] @ qbar[t - 1]
    sched = MaskSchedule(
        k=k, kernel=kernel,
        alphas=np.asarray(alphas, dtype=np.float64),
        betas=np.asarray(betas, dtype=np.float64),
        gammas=np.asarray(gammas, dtype=np.float64),
        q=q, qbar=qbar, freeze_empty=freeze_empty,
    )
    if check_terminal and sched.terminal_mask_mass() < TERMINAL_MASK_MIN:
        raise ValueError(
            f"terminal mask probability {sched.terminal_mask_mass():.6f} below {TERMINAL_MASK_MIN}"
        )
    return sched


def mask_schedule_from_params(k: int, alphas, betas, gammas, *,
                              kernel: str = KERNEL_INDEPENDENT,
                              freeze_empty: bool = False) -> MaskSchedule:
    """Build a mask-structure schedule from explicit per-step parameters.

    Every step needs alpha_t >= 0, beta_t >= 0, gamma_t in [0, 1], and
    alpha_t + k beta_t + gamma_t == 1.
    """
    alphas = np.asarray(alphas, dtype=np.float64)
    betas = np.asarray(betas, dtype=np.float64)
    gammas = np.asarray(gammas, dtype=np.float64)
    if not (alphas.shape == betas.shape == gammas.shape) or alphas.ndim != 1:
        raise ValueError("alphas, betas, gammas must be equal-length vectors")
    if (alphas < 0).any() or (betas < 0).any() or (gammas < 0).any() or (gammas > 1).any():
        raise ValueError("schedule parameters out of range")
    if not np.allclose(alphas + k * betas + gammas, 1.0, atol=1e-12):
        raise ValueError("need alpha_t + k beta_t + gamma_t == 1 at every step")
    mats = [
        _mask_step_matrix(k, float(a), float(b), float(g), freeze_empty)
        for a, b, g in zip(alphas, betas, gammas)
    ]
    return _assemble_schedule(k, kernel, alphas, betas, gammas, mats, freeze_empty)


def uniform_schedule_from_stays(k: int, stays, *, kernel: str = KERNEL_UNIFORM,
                                freeze_empty: bool = False) -> MaskSchedule:
    """Build a uniform-structure schedule from per-step stay weights."""
    stays = np.asarray(stays, dtype=np.float64)
    if stays.ndim != 1 or (stays < 0).any() or (stays > 1).any():
        raise ValueError("stay weights must lie in [0, 1]")
    states = k if freeze_empty else k + 1
    mats = [_uniform_step_matrix(k, float(a), freeze_empty) for a in stays]
    betas = (1.0 - stays) / states
    return _assemble_schedule(k, kernel, stays, betas, np.zeros_like(stays), mats, freeze_empty)


def _std_normal_cdf(x: np.ndarray) -> np.ndarray:
    return np.array([0.5 * (1.0 + math.erf(v / math.sqrt(2.0))) for v in x])


_HERMITE_NODES, _HERMITE_WEIGHTS = np.polynomial.hermite_e.hermegauss(201)


def argmax_stay_probability(alpha_bar: float, n_states: int) -> float:
    """Probability that the argmax of a noisy one-hot embedding is unchanged.

    For x = sqrt(alpha_bar) e_i + sqrt(1 - alpha_bar) z with z standard normal
    in n_states dimensions, this is E_z[Phi(z + shift)^(n_states - 1)] with
    shift = sqrt(alpha_bar / (1 - alpha_bar)), evaluated by Gauss-Hermite
    quadrature.
    """
    if not 0.0 <= alpha_bar <= 1.0:
        raise ValueError("alpha_bar must lie in [0, 1]")
    if n_states < 2:
        raise ValueError("need at least two states")
    if alpha_bar >= 1.0:
        return 1.0
    shift = math.sqrt(alpha_bar / (1.0 - alpha_bar))
    phi = _std_normal_cdf(_HERMITE_NODES + shift)
    vals = phi ** (n_states - 1)
    return float((_HERMITE_WEIGHTS * vals).sum() / math.sqrt(2.0 * math.pi))


def build_schedule(T: int, k: int, kernel: str = KERNEL_INDEPENDENT, *,
                   leak: float = 0.01, freeze_empty: bool = False,
                   node_gamma=None) -> MaskSchedule:
    """Construct the forward schedule for one variable kind.

    Mask kernels use gamma_t = 1 / (T - t + 1) and beta_t = leak / k, except
    that beta is truncated at steps where the remaining non-mask mass cannot
    cover it (only the final step at the default gamma), keeping alpha_t >= 0.
    ``node_gamma`` overrides the per-step mask event probabilities; the
    joint-mask relation schedule passes the per-edge event probability
    1 - (1 - gamma_t)^2 through it so that scalar marginals stay exact.

    The uniform kernel mixes toward the uniform distribution over the real
    and empty labels with cumulative stay weights on the cosine ramp. The
    gaussian-embedding kernel follows the label readout of one-hot Gaussian
    diffusion on the same ramp.
    """
    if T < 1:
        raise ValueError("need at least one step")
    if k < 1:
        raise ValueError("need at least one real label")
    if kernel in MASKING_KERNELS:
        if leak < 0:
            raise ValueError("leak must be non-negative")
        if node_gamma is None:
            gammas = np.array([1.0 / (T - t + 1) for t in range(1, T + 1)])
        else:
            gammas = np.asarray(node_gamma, dtype=np.float64)
            if gammas.shape != (T,):
                raise ValueError("node_gamma must have one entry per step")
        betas = np.minimum(leak, 1.0 - gammas) / k
        alphas = 1.0 - gammas - k * betas
        if (alphas < -1e-15).any():
            raise ValueError("schedule parameters give a negative survival probability")
        alphas = np.clip(alphas, 0.0, None)
        mats = [
            _mask_step_matrix(k, float(a), float(b), float(g), freeze_empty)
            for a, b, g in zip(alphas, betas, gammas)
        ]
        return _assemble_schedule(k, kernel, alphas, betas, gammas, mats, freeze_empty,
                                  check_terminal=node_gamma is None)
    if kernel == KERNEL_UNIFORM:
        ab = cosine_alpha_bar(T)
        stays = ab[1:] / ab[:-1]
        return uniform_schedule_from_stays(k, stays, kernel=kernel, freeze_empty=freeze_empty)
    if kernel == KERNEL_GAUSSIAN:
        states = k if freeze_empty else k + 1
        if states < 2:
            raise ValueError("gaussian-embedding kernel needs at least two mixing states")
        ab = cosine_alpha_bar(T)
        abar = np.empty(T + 1, dtype=np.float64)
        abar[0] = 1.0
        for t in range(1, T + 1):
            p_stay = argmax_stay_probability(float(ab[t]), states)
            a = (states * p_stay - 1.0) / (states - 1.0)
            abar[t] = min(max(a, 1e-12), abar[t - 1])
        stays = abar[1:] / abar[:-1]
        return uniform_schedule_from_stays(k, stays, kernel=kernel, freeze_empty=freeze_empty)
    raise ValueError(f"unknown kernel {kernel!r}")


@dataclass(frozen=True)
class GraphSchedule:
    """Bundle of per-kind schedules sharing T and kernel."""

    category: MaskSchedule
    code: MaskSchedule
    relation: MaskSchedule

    def __post_init__(self):
        if not (self.category.T == self.code.T == self.relation.T):
            raise ValueError("per-kind schedules must share T")
        if not (self.category.kernel == self.code.kernel == self.relation.kernel):
            raise ValueError("per-kind schedules must share the kernel")

    @property
    def T(self) -> int:
        return self.category.T

    @property
    def kernel(self) -> str:
        return self.category.kernel


def build_graph_schedule(config: SceneConfig, T: int,
                         kernel: str = KERNEL_INDEPENDENT, *,
                         leak: float = 0.01,
                         freeze_empty: bool = False) -> GraphSchedule:
    """Schedules for categories, codes, and relations of one scene family."""
    if kernel == KERNEL_JOINT:
        node_gamma = np.array([1.0 / (T - t + 1) for t in range(1, T + 1)])
        edge_gamma = 1.0 - (1.0 - node_gamma) ** 2
        return GraphSchedule(
            category=build_schedule(T, config.k_c, kernel, leak=leak,
                                    freeze_empty=freeze_empty),
            code=build_schedule(T, config.k_f, kernel, leak=leak,
                                freeze_empty=freeze_empty),
            relation=build_schedule(T, config.k_e, kernel, leak=leak,
                                    freeze_empty=freeze_empty, node_gamma=edge_gamma),
        )
    return GraphSchedule(
        category=build_schedule(T, config.k_c, kernel, leak=leak, freeze_empty=freeze_empty),
        code=build_schedule(T, config.k_f, kernel, leak=leak, freeze_empty=freeze_empty),
        relation=build_schedule(T, config.k_e, kernel, leak=leak, freeze_empty=freeze_empty),
    )


def forward_sample(x0: int, t: int, schedule: MaskSchedule,
                   rng: np.random.Generator) -> int:
    """Draw x_t from the forward marginal given a clean label.

    A mask input stays mask at any t since the state is absorbing.
    """
    dist = schedule.forward_dist(int(x0), t)
    return int(rng.choice(schedule.n_states, p=dist))


def forward_sample_array(x0, t: int, schedule: MaskSchedule,
                         rng: np.random.Generator) -> np.ndarray:
    """Vectorized forward_sample over a label array."""
    x0 = np.asarray(x0, dtype=np.int64)
    if not 0 <= t <= schedule.T:
        raise ValueError(f"t={t} outside [0, {schedule.T}]")
    probs = schedule.qbar[t][:, x0.reshape(-1)].T
    return _sample_rows(probs, rng).reshape(x0.shape)


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row of a (rows, states) probability matrix."""
    cdf = np.cumsum(probs, axis=1)
    totals = cdf[:, -1]
    if (totals <= 0.0).any():
        raise ValueError("a sampling row has zero total mass")
    u = rng.random(probs.shape[0]) * totals
    return (cdf < u[:, None]).sum(axis=1).astype(np.int64)


def true_posterior(x_t: int, x0: int, t: int, schedule: MaskSchedule) -> np.ndarray:
    """Exact reverse conditional q(x_{t-1} | x_t, x_0) as a dense vector.

    Bayes over the factorized chain:
    q(x_{t-1} = j | x_t, x_0) = Q_t[x_t, j] Qbar_{t-1}[j, x_0] / Qbar_t[x_t, x_0].
    Raises when the conditioning pair has zero forward probability. At t = 1
    the result is a point mass on x_0's reachable set.
    """
    if not 1 <= t <= schedule.T:
        raise ValueError(f"t={t} outside [1, {schedule.T}]")
    m = schedule.n_states
    if not (0 <= x_t < m and 0 <= x0 < m):
        raise ValueError("label outside the alphabet")
    denom = schedule.qbar[t][x_t, x0]
    if denom <= 0.0:
        raise ValueError(f"impossible pair: q(x_t={x_t} | x0={x0}) = 0 at t={t}")
    num = schedule.q[t - 1][x_t, :] * schedule.qbar[t - 1][:, x0]
    return num / denom


def posterior_mixture_tensor(schedule: MaskSchedule, t: int) -> np.ndarray:
    """Tensor M[i, k, j] = q(x_{t-1} = j | x_t = i, x_0 = k) for clean labels
    k in [0, k_real] (mask excluded); impossible (i, k) pairs give zero rows."""
    if not 1 <= t <= schedule.T:
        raise ValueError(f"t={t} outside [1, {schedule.T}]")
    m = schedule.n_states
    n_clean = schedule.k + 1
    num = np.einsum("ij,jk->ikj", schedule.q[t - 1], schedule.qbar[t - 1][:, :n_clean])
    denom = schedule.qbar[t][:, :n_clean]
    out = np.zeros((m, n_clean, m), dtype=np.float64)
    ok = denom > 0.0
    out[ok] = num[ok] / denom[ok][:, None]
    return out


def model_posterior(x_t: int, p_x0, t: int, schedule: MaskSchedule) -> np.ndarray:
    """Reverse conditional induced by a clean-label prediction.

    Mixes the true posteriors over clean labels with weights p_x0 and
    renormalizes; mixture terms whose conditioning pair is impossible drop
    out. Raises when every term is impossible.
    """
    p_x0 = np.asarray(p_x0, dtype=np.float64)
    n_clean = schedule.k + 1
    if p_x0.shape != (n_clean,):
        raise ValueError(f"p_x0 must have {n_clean} entries (real labels plus empty)")
    M = posterior_mixture_tensor(schedule, t)
    if not 0 <= x_t < schedule.n_states:
        raise ValueError("label outside the alphabet")
    out = p_x0 @ M[x_t]
    total = out.sum()
    if total <= 0.0:
        raise ValueError("all mixture components are impossible for this state")
    return out / total


def apply_cfg(p_cond, p_uncond, scale: float) -> np.ndarray:
    """Classifier-free guidance in probability space.

    Computes p_cond + scale (p_cond - p_uncond) along the last axis, clamps
    negatives to zero, and renormalizes. scale = 0 returns p_cond unchanged;
    identical inputs pass through exactly for any scale.
    """
    p_cond = np.asarray(p_cond, dtype=np.float64)
    p_uncond = np.asarray(p_uncond, dtype=np.float64)
    if p_cond.shape != p_uncond.shape:
        raise ValueError("guided distributions must share a shape")
    if scale < 0:
        raise ValueError("guidance scale must be non-negative")
    # exact no-op cases bypass the renormalizing division
    if scale == 0.0 or np.array_equal(p_cond, p_uncond):
        return p_cond.copy()
    out = np.clip(p_cond + scale * (p_cond - p_uncond), 0.0, None)
    totals = out.sum(axis=-1, keepdims=True)
    if (totals <= 0.0).any():
        raise ValueError("guidance emptied a distribution; lower the scale")
    return out / totals


@dataclass(frozen=True)
class GuidanceConfig:
    """Guidance strength plus the conditioning-dropout rate a trained
    denoiser would use; the exact denoiser conditions by filtering, so the
    dropout rate is informational there."""

    scale: float = 0.0
    uncond_dropout: float = 0.2

    def __post_init__(self):
        if self.scale < 0:
            raise ValueError("guidance scale must be non-negative")
        if not 0.0 <= self.uncond_dropout <= 1.0:
            raise ValueError("dropout must be a probability")


@dataclass(frozen=True)
class LossWeights:
    """Mixing weights for the per-kind bound terms."""

    category: float = 1.0
    code: float = 1.0
    relation: float = 10.0


@dataclass
class GraphPrediction:
    """Per-slot clean-label distributions; mask never receives mass."""

    categories: np.ndarray  # (n, k_c + 1)
    codes: np.ndarray       # (n, n_f, k_f + 1)
    relations: np.ndarray   # (n_pairs, k_e + 1)


class GraphDenoiser:
    """Interface: predict clean-label distributions from a corrupted graph."""

    def predict(self, graph: SemanticGraph, instruction: Instruction | None,
                t: int) -> GraphPrediction:
        raise NotImplementedError

    def predict_arrays(self, cat, code_flat, rel, filters, t: int, observe=None):
        """Batched prediction on raw state arrays.

        cat: (B, n) labels, code_flat: (B, n * n_f), rel: (B, P). ``filters``
        is None, one instruction shared by the batch, a per-chain sequence,
        or a precomputed boolean matrix over the denoiser's hypotheses.
        ``observe`` optionally masks which slots carry evidence, as a triple
        of boolean arrays shaped like the state arrays; clamped slots are
        excluded there because their values are not forward samples. Returns
        (pc (B, n, k_c + 1), pf (B, n * n_f, k_f + 1), pe (B, P, k_e + 1)).
        """
        raise NotImplementedError


class EmpiricalGraphDenoiser(GraphDenoiser):
    """Exact clean-graph posterior over a finite dataset of padded graphs.

    The weight of dataset graph G_i given an observed state is its prior
    frequency times the product over all slots of the forward marginal
    Qbar_t[observed | clean], restricted by the instruction filter. The
    prediction is the per-slot marginal of the weighted dataset; mask states
    never receive mass because clean graphs contain none.
    """

    def __init__(self, dataset, schedule: GraphSchedule):
        graphs = list(dataset)
        if not graphs:
            raise ValueError("empty graph dataset")
        shape = (graphs[0].n_slots, graphs[0].n_f)
        kinds = (graphs[0].k_c, graphs[0].k_f, graphs[0].k_e)
        counts: dict[bytes, int] = {}
        uniques: dict[bytes, SemanticGraph] = {}
        for g in graphs:
            if g.has_mask():
                raise ValueError("dataset graphs must be clean")
            if (g.n_slots, g.n_f) != shape or (g.k_c, g.k_f, g.k_e) != kinds:
                raise ValueError("dataset graphs must share shape and vocabulary")
            key = g.key()
            counts[key] = counts.get(key, 0) + 1
            uniques.setdefault(key, g)
        self.schedule = schedule
        self.graphs = [uniques[k] for k in uniques]
        self.n_slots, self.n_f = shape
        self.k_c, self.k_f, self.k_e = kinds
        if schedule.category.k != self.k_c or schedule.code.k != self.k_f \
                or schedule.relation.k != self.k_e:
            raise ValueError("schedule vocabulary disagrees with the dataset")
        self._counts = np.array([counts[g.key()] for g in self.graphs], dtype=np.float64)
        self._log_prior = np.log(self._counts / self._counts.sum())
        self._ucat = np.stack([g.categories for g in self.graphs])
        self._ucode = np.stack([g.codes.reshape(-1) for g in self.graphs])
        self._urel = np.stack([g.relations for g in self.graphs])
        self._onehot_cat = _onehot(self._ucat, self.k_c + 1)
        self._onehot_code = _onehot(self._ucode, self.k_f + 1)
        self._onehot_rel = _onehot(self._urel, self.k_e + 1)
        self._filter_cache: dict[Instruction, np.ndarray] = {}
        self._logq_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    @property
    def n_unique(self) -> int:
        return len(self.graphs)

    def filter_vector(self, instruction: Instruction | None) -> np.ndarray | None:
        """Boolean mask of dataset graphs matching an instruction.

        Raises UnsatisfiableInstructionError when the filter empties the
        dataset, naming the first constraint stage that did it.
        """
        if instruction is None or instruction.is_unconditional():
            return None
        cached = self._filter_cache.get(instruction)
        if cached is not None:
            return cached
        mask = np.array([instruction_matches(g, instruction) for g in self.graphs])
        if not mask.any():
            stage = "combined"
            if instruction.triplets:
                trip_only = Instruction(triplets=instruction.triplets)
                if not any(instruction_matches(g, trip_only) for g in self.graphs):
                    stage = "triplets"
            if stage == "combined" and instruction.style is not None:
                style_only = Instruction(style=instruction.style)
                if not any(instruction_matches(g, style_only) for g in self.graphs):
                    stage = "style"
            raise UnsatisfiableInstructionError(
                f"no dataset graph satisfies the instruction (failed stage: {stage})",
                stage=stage,
            )
        self._filter_cache[instruction] = mask
        return mask

    def _log_qbar(self, t: int):
        cached = self._logq_cache.get(t)
        if cached is None:
            cached = tuple(
                np.where(s.qbar[t] > 0.0, np.log(np.maximum(s.qbar[t], 1e-300)), -np.inf)
                for s in (self.schedule.category, self.schedule.code, self.schedule.relation)
            )
            self._logq_cache[t] = cached
        return cached

    def log_likelihood(self, cat, code_flat, rel, t: int, observe=None) -> np.ndarray:
        """(B, n_unique) log q(observed state | clean graph) at step t.

        ``observe`` optionally restricts which slots contribute, as boolean
        arrays shaped like the states; excluded slots add nothing.
        """
        lc, lf, le = self._log_qbar(t)
        ll = np.zeros((cat.shape[0], self.n_unique), dtype=np.float64)
        for lq, state, obs, clean in (
            (lc, cat, None if observe is None else observe[0], self._ucat),
            (lf, code_flat, None if observe is None else observe[1], self._ucode),
            (le, rel, None if observe is None else observe[2], self._urel),
        ):
            contrib = lq[state[:, None, :], clean[None, :, :]]
            if obs is not None:
                contrib = np.where(obs[:, None, :], contrib, 0.0)
            ll += contrib.sum(axis=2)
        return ll

    def posterior_weights(self, cat, code_flat, rel, filters, t: int,
                          observe=None) -> np.ndarray:
        """(B, n_unique) posterior over dataset graphs given observed states."""
        ll = self.log_likelihood(cat, code_flat, rel, t, observe) + self._log_prior[None, :]
        if filters is not None:
            ll = np.where(filters, ll, -np.inf)
        peak = ll.max(axis=1, keepdims=True)
        dead = ~np.isfinite(peak[:, 0])
        if dead.any():
            raise ValueError("a chain state has zero likelihood under every dataset graph")
        w = np.exp(ll - peak)
        return w / w.sum(axis=1, keepdims=True)

    def _resolve_filters(self, filters, batch: int):
        if filters is None:
            return None
        if isinstance(filters, Instruction):
            vec = self.filter_vector(filters)
            return None if vec is None else np.broadcast_to(vec, (batch, self.n_unique))
        if isinstance(filters, np.ndarray):
            if filters.shape != (batch, self.n_unique) and filters.shape != (self.n_unique,):
                raise ValueError("filter matrix shape disagrees with the batch")
            return np.broadcast_to(filters, (batch, self.n_unique))
        rows = []
        for instr in filters:
            vec = self.filter_vector(instr) if instr is not None else None
            rows.append(np.ones(self.n_unique, dtype=bool) if vec is None else vec)
        if len(rows) != batch:
            raise ValueError("need one instruction per chain")
        return np.stack(rows, axis=0)

    def frozen_value_filter(self, cat_mask, cat_values, code_mask, code_values,
                            rel_mask, rel_values) -> np.ndarray:
        """(B, n_unique) hypotheses consistent with clamped slot values.

        This is how clamped slots condition the posterior exactly: instead of
        entering the likelihood (their values are not forward samples), they
        restrict the hypothesis set to dataset graphs carrying those values.
        """
        okc = ((self._ucat[None, :, :] == cat_values[:, None, :])
               | ~cat_mask[:, None, :]).all(axis=2)
        okf = ((self._ucode[None, :, :] == code_values[:, None, :])
               | ~code_mask[:, None, :]).all(axis=2)
        oke = ((self._urel[None, :, :] == rel_values[:, None, :])
               | ~rel_mask[:, None, :]).all(axis=2)
        ok = okc & okf & oke
        if (~ok.any(axis=1)).any():
            raise ValueError("frozen slots are inconsistent with every dataset graph")
        return ok

    def combine_filters(self, instructions, base: np.ndarray | None,
                        batch: int) -> np.ndarray | None:
        """AND an instruction filter with a hard value filter."""
        inst = self._resolve_filters(instructions, batch)
        if inst is None:
            return base
        if base is None:
            return inst
        both = inst & base
        if (~both.any(axis=1)).any():
            raise UnsatisfiableInstructionError(
                "the instruction conflicts with the frozen scene content",
                stage="combined",
            )
        return both

    def predict_arrays(self, cat, code_flat, rel, filters, t: int, observe=None):
        filt = self._resolve_filters(filters, cat.shape[0])
        w = self.posterior_weights(cat, code_flat, rel, filt, t, observe)
        pc = np.einsum("bu,unk->bnk", w, self._onehot_cat)
        pf = np.einsum("bu,unk->bnk", w, self._onehot_code)
        pe = np.einsum("bu,unk->bnk", w, self._onehot_rel)
        return pc, pf, pe

    def predict(self, graph: SemanticGraph, instruction: Instruction | None,
                t: int) -> GraphPrediction:
        if (graph.n_slots, graph.n_f) != (self.n_slots, self.n_f):
            raise ValueError("graph shape disagrees with the dataset")
        pc, pf, pe = self.predict_arrays(
            graph.categories[None, :],
            graph.codes.reshape(1, -1),
            graph.relations[None, :],
            instruction, t,
        )
        return GraphPrediction(
            categories=pc[0],
            codes=pf[0].reshape(self.n_slots, self.n_f, self.k_f + 1),
            relations=pe[0],
        )


class UniformGraphDenoiser(GraphDenoiser):
    """Baseline denoiser predicting the uniform clean distribution."""

    def __init__(self, n_slots: int, n_f: int, k_c: int, k_f: int, k_e: int = 11):
        self.n_slots, self.n_f = n_slots, n_f
        self.k_c, self.k_f, self.k_e = k_c, k_f, k_e

    def predict_arrays(self, cat, code_flat, rel, filters, t: int, observe=None):
        b = cat.shape[0]
        pc = np.full((b, self.n_slots, self.k_c + 1), 1.0 / (self.k_c + 1))
        pf = np.full((b, self.n_slots * self.n_f, self.k_f + 1), 1.0 / (self.k_f + 1))
        pe = np.full((b, rel.shape[1], self.k_e + 1), 1.0 / (self.k_e + 1))
        return pc, pf, pe

    def predict(self, graph: SemanticGraph, instruction: Instruction | None,
                t: int) -> GraphPrediction:
        pc, pf, pe = self.predict_arrays(
            graph.categories[None, :], graph.codes.reshape(1, -1),
            graph.relations[None, :], None, t,
        )
        return GraphPrediction(pc[0], pf[0].reshape(graph.n_slots, graph.n_f, self.k_f + 1), pe[0])


def empirical_denoiser(dataset, schedule: GraphSchedule) -> EmpiricalGraphDenoiser:
    return EmpiricalGraphDenoiser(dataset, schedule)


def _onehot(labels: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(labels.shape + (n,), dtype=np.float64)
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


@dataclass(frozen=True)
class FrozenGraph:
    """Per-slot clamp specification for constrained reverse sampling."""

    cat_mask: np.ndarray
    cat_values: np.ndarray
    code_mask: np.ndarray
    code_values: np.ndarray
    rel_mask: np.ndarray
    rel_values: np.ndarray

    @classmethod
    def nothing(cls, n_slots: int, n_f: int) -> "FrozenGraph":
        p = n_pairs(n_slots)
        return cls(
            np.zeros(n_slots, dtype=bool), np.zeros(n_slots, dtype=np.int64),
            np.zeros((n_slots, n_f), dtype=bool), np.zeros((n_slots, n_f), dtype=np.int64),
            np.zeros(p, dtype=bool), np.zeros(p, dtype=np.int64),
        )

    @classmethod
    def from_graph(cls, graph: SemanticGraph, *, freeze_categories=False,
                   freeze_codes=False, freeze_relations=False,
                   slots=None) -> "FrozenGraph":
        """Freeze whole variable kinds, optionally restricted to a slot set.

        With ``slots`` given, categories and codes freeze on those slots and
        relations freeze on pairs lying entirely inside the set.
        """
        from .relations import pair_index

        n = graph.n_slots
        slot_mask = np.zeros(n, dtype=bool)
        if slots is None:
            slot_mask[:] = True
        else:
            slot_mask[np.asarray(list(slots), dtype=np.int64)] = True
        pair_mask = np.zeros(n_pairs(n), dtype=bool)
        for j in range(n):
            for k in range(j + 1, n):
                pair_mask[pair_index(j, k, n)] = slot_mask[j] and slot_mask[k]
        cat_mask = slot_mask & bool(freeze_categories)
        code_mask = np.broadcast_to(slot_mask[:, None] & bool(freeze_codes),
                                    (n, graph.n_f)).copy()
        rel_mask = pair_mask & bool(freeze_relations)
        return cls(
            cat_mask, np.where(cat_mask, graph.categories, 0),
            code_mask, np.where(code_mask, graph.codes, 0),
            rel_mask, np.where(rel_mask, graph.relations, 0),
        )


def _stack_frozen(frozen, batch: int, n_slots: int, n_f: int):
    if frozen is None:
        frozen = FrozenGraph.nothing(n_slots, n_f)
    if isinstance(frozen, FrozenGraph):
        frozen = [frozen] * batch
    frozen = list(frozen)
    if len(frozen) != batch:
        raise ValueError("need one frozen spec per chain")
    return (
        np.stack([f.cat_mask for f in frozen]),
        np.stack([f.cat_values for f in frozen]),
        np.stack([f.code_mask.reshape(-1) for f in frozen]),
        np.stack([f.code_values.reshape(-1) for f in frozen]),
        np.stack([f.rel_mask for f in frozen]),
        np.stack([f.rel_values for f in frozen]),
    )


def _initial_states(schedule: MaskSchedule, rows: int, cols: int,
                    rng: np.random.Generator) -> np.ndarray:
    if schedule.kernel in MASKING_KERNELS:
        return np.full((rows, cols), mask_state(schedule.k), dtype=np.int64)
    states = schedule.k if schedule.freeze_empty else schedule.k + 1
    return rng.integers(states, size=(rows, cols), dtype=np.int64)


def _reverse_step_kind(states: np.ndarray, px0: np.ndarray, schedule: MaskSchedule,
                       t: int, rng: np.random.Generator,
                       frozen_mask: np.ndarray) -> np.ndarray:
    """Advance one kind's state matrix from time t to t - 1.

    Frozen entries pass through untouched; they hold clean values that the
    time-t mixture would reject as impossible.
    """
    out = states.reshape(-1).copy()
    free = np.flatnonzero(~frozen_mask.reshape(-1))
    if free.size:
        M = posterior_mixture_tensor(schedule, t)
        flat = out[free]
        p0 = px0.reshape(-1, px0.shape[-1])[free]
        probs = np.empty((free.size, schedule.n_states), dtype=np.float64)
        for value in np.unique(flat):
            rows = flat == value
            probs[rows] = p0[rows] @ M[value]
        totals = probs.sum(axis=1)
        if (totals <= 0.0).any():
            raise ValueError("reverse step produced an impossible state")
        out[free] = _sample_rows(probs, rng)
    return out.reshape(states.shape)


def reverse_sample_batch(denoiser: GraphDenoiser, schedule: GraphSchedule,
                         n_chains: int, rng: np.random.Generator, *,
                         instructions=None,
                         guidance: GuidanceConfig | None = None,
                         frozen=None,
                         n_slots: int | None = None,
                         n_f: int | None = None) -> list[SemanticGraph]:
    """Run n_chains reverse chains in lockstep and return clean graphs.

    Masking kernels start from the all-mask state; uniform-structure kernels
    start from their near-uniform terminal. ``instructions`` may be a single
    instruction shared by every chain or one per chain; guidance with a
    positive scale mixes in a second, unconditional prediction. ``frozen``
    clamps chosen slots to clean values at every step, which is how
    completion, rearrangement, and stylization condition on partial scenes.
    """
    if n_chains < 1:
        raise ValueError("need at least one chain")
    n_slots = n_slots if n_slots is not None else getattr(denoiser, "n_slots", None)
    n_f = n_f if n_f is not None else getattr(denoiser, "n_f", None)
    if n_slots is None or n_f is None:
        raise ValueError("denoiser does not expose slot shape; pass n_slots and n_f")
    guidance = guidance or GuidanceConfig()
    k_c, k_f, k_e = schedule.category.k, schedule.code.k, schedule.relation.k

    cat = _initial_states(schedule.category, n_chains, n_slots, rng)
    code = _initial_states(schedule.code, n_chains, n_slots * n_f, rng)
    rel = _initial_states(schedule.relation, n_chains, n_pairs(n_slots), rng)
    fcm, fcv, ffm, ffv, frm, frv = _stack_frozen(frozen, n_chains, n_slots, n_f)
    cat = np.where(fcm, fcv, cat)
    code = np.where(ffm, ffv, code)
    rel = np.where(frm, frv, rel)

    # Clamped slots condition the denoiser through a hard hypothesis filter
    # and are excluded from the likelihood; see frozen_value_filter.
    observe = None
    cond_filters, uncond_filters = instructions, None
    if fcm.any() or ffm.any() or frm.any():
        observe = (~fcm, ~ffm, ~frm)
        if not (hasattr(denoiser, "frozen_value_filter") and hasattr(denoiser, "combine_filters")):
            raise TypeError("this denoiser cannot condition on frozen slots")
        base = denoiser.frozen_value_filter(fcm, fcv, ffm, ffv, frm, frv)
        cond_filters = denoiser.combine_filters(instructions, base, n_chains)
        uncond_filters = base

    for t in range(schedule.T, 0, -1):
        pc, pf, pe = denoiser.predict_arrays(cat, code, rel, cond_filters, t, observe)
        if guidance.scale > 0.0 and instructions is not None:
            uc, uf, ue = denoiser.predict_arrays(cat, code, rel, uncond_filters, t, observe)
            pc = apply_cfg(pc, uc, guidance.scale)
            pf = apply_cfg(pf, uf, guidance.scale)
            pe = apply_cfg(pe, ue, guidance.scale)
        for p, k in ((pc, k_c), (pf, k_f), (pe, k_e)):
            if p.shape[-1] != k + 1:
                raise ValueError("denoiser must predict real labels plus empty, never mask")
            sums = p.sum(axis=-1)
            if not np.allclose(sums, 1.0, atol=1e-9):
                raise ValueError("denoiser prediction is not normalized")
        cat = _reverse_step_kind(cat, pc, schedule.category, t, rng, fcm)
        code = _reverse_step_kind(code, pf, schedule.code, t, rng, ffm)
        rel = _reverse_step_kind(rel, pe, schedule.relation, t, rng, frm)
        cat = np.where(fcm, fcv, cat)
        code = np.where(ffm, ffv, code)
        rel = np.where(frm, frv, rel)

    out = []
    for b in range(n_chains):
        g = SemanticGraph(cat[b], code[b].reshape(n_slots, n_f), rel[b],
                          k_c=k_c, k_f=k_f, k_e=k_e)
        if g.has_mask():
            raise ValueError("reverse chain ended with mask states")
        out.append(g)
    return out


def reverse_sample(denoiser: GraphDenoiser, schedule: GraphSchedule,
                   rng: np.random.Generator, *,
                   instruction: Instruction | None = None,
                   guidance: GuidanceConfig | None = None,
                   frozen: FrozenGraph | None = None,
                   n_slots: int | None = None,
                   n_f: int | None = None) -> SemanticGraph:
    """Single-chain reverse sampling; see reverse_sample_batch."""
    return reverse_sample_batch(
        denoiser, schedule, 1, rng, instructions=instruction,
        guidance=guidance, frozen=frozen, n_slots=n_slots, n_f=n_f,
    )[0]


def corrupt_graph(graph: SemanticGraph, t: int, schedule: GraphSchedule,
                  rng: np.random.Generator) -> SemanticGraph:
    """Draw G_t from the forward process.

    Independent kernels corrupt every slot independently through its own
    schedule. The joint-mask kernel instead simulates the chain step by step
    with one shared mask event per node and step: when a node's event fires,
    its category, codes, and incident relations mask together; survivors leak
    through the per-kind conditional transition. The per-variable marginals
    coincide with the stored transition matrices in both cases.
    """
    if schedule.kernel != KERNEL_JOINT:
        cat = forward_sample_array(graph.categories, t, schedule.category, rng)
        code = forward_sample_array(graph.codes, t, schedule.code, rng)
        rel = forward_sample_array(graph.relations, t, schedule.relation, rng)
        return SemanticGraph(cat, code, rel, k_c=graph.k_c, k_f=graph.k_f, k_e=graph.k_e)

    from .relations import pair_index

    n = graph.n_slots
    cat = graph.categories.copy()
    code = graph.codes.copy()
    rel = graph.relations.copy()
    cat_mask_v, code_mask_v, rel_mask_v = (
        mask_state(graph.k_c), mask_state(graph.k_f), mask_state(graph.k_e))
    masked = np.zeros(n, dtype=bool)
    for u in range(1, t + 1):
        gamma = schedule.category.gammas[u - 1]
        fired = rng.random(n) < gamma
        newly = fired & ~masked
        masked |= fired
        cat[newly] = cat_mask_v
        code[newly] = code_mask_v
        alive = ~masked
        cat[alive] = _leak_step(cat[alive], schedule.category, u, rng)
        code[alive] = _leak_step(code[alive], schedule.code, u, rng)
        for j in range(n):
            for k in range(j + 1, n):
                idx = pair_index(j, k, n)
                if masked[j] or masked[k]:
                    rel[idx] = rel_mask_v
                elif rel[idx] != rel_mask_v:
                    rel[idx : idx + 1] = _leak_step(rel[idx : idx + 1],
                                                    schedule.relation, u, rng)
    return SemanticGraph(cat, code, rel, k_c=graph.k_c, k_f=graph.k_f, k_e=graph.k_e)


def _leak_step(values: np.ndarray, schedule: MaskSchedule, t: int,
               rng: np.random.Generator) -> np.ndarray:
    """One forward step conditioned on the mask event not firing."""
    if values.size == 0:
        return values
    q = schedule.q[t - 1].copy()
    msk = mask_state(schedule.k)
    q[msk, :] = 0.0
    cols = q.sum(axis=0)
    cols[cols == 0.0] = 1.0
    q = q / cols[None, :]
    probs = q[:, values.reshape(-1)].T
    return _sample_rows(probs, rng).reshape(values.shape).astype(np.int64)


def _kl(q: np.ndarray, p: np.ndarray) -> float:
    """KL(q || p) for dense categorical vectors; 0 log 0 = 0."""
    support = q > 0.0
    if (p[support] <= 0.0).any():
        return float("inf")
    return float((q[support] * (np.log(q[support]) - np.log(p[support]))).sum())


def variational_bound(denoiser: GraphDenoiser, graph: SemanticGraph,
                      schedule: GraphSchedule, rng: np.random.Generator, *,
                      instruction: Instruction | None = None,
                      weights: LossWeights | None = None,
                      n_mc: int = 4) -> float:
    """Monte Carlo negative variational bound of one clean graph.

    Sums, over every step and slot, the KL between the exact reverse
    conditional and the denoiser-induced one, plus the reconstruction
    negative log likelihood at t = 1; the constant terminal term is dropped.
    The three variable kinds combine with the loss weights. Non-negative by
    construction; an exact denoiser on the graph's own point dataset drives
    it to zero when the leak is zero.
    """
    if graph.has_mask():
        raise ValueError("the bound is evaluated on clean graphs")
    weights = weights or LossWeights()
    if n_mc < 1:
        raise ValueError("need at least one Monte Carlo draw")
    totals = {"category": 0.0, "code": 0.0, "relation": 0.0}
    clean = {
        "category": graph.categories,
        "code": graph.codes.reshape(-1),
        "relation": graph.relations,
    }
    kind_schedules = {
        "category": schedule.category,
        "code": schedule.code,
        "relation": schedule.relation,
    }
    for t in range(1, schedule.T + 1):
        for _ in range(n_mc):
            g_t = corrupt_graph(graph, t, schedule, rng)
            pred = denoiser.predict(g_t, instruction, t)
            states = {
                "category": g_t.categories,
                "code": g_t.codes.reshape(-1),
                "relation": g_t.relations,
            }
            preds = {
                "category": pred.categories,
                "code": pred.codes.reshape(-1, pred.codes.shape[-1]),
                "relation": pred.relations,
            }
            for kind in totals:
                sched = kind_schedules[kind]
                for slot in range(states[kind].shape[0]):
                    x_t = int(states[kind][slot])
                    x0 = int(clean[kind][slot])
                    p_slot = preds[kind][slot]
                    if t == 1:
                        prob = model_posterior(x_t, p_slot, 1, sched)[x0]
                        totals[kind] += -math.log(max(float(prob), 1e-300)) / n_mc
                    else:
                        q_post = true_posterior(x_t, x0, t, sched)
                        p_post = model_posterior(x_t, p_slot, t, sched)
                        totals[kind] += _kl(q_post, p_post) / n_mc
    return (
        weights.category * totals["category"]
        + weights.code * totals["code"]
        + weights.relation * totals["relation"]
    )


def schedule_to_json(schedule: GraphSchedule) -> dict:
    """Serializable summary: per-kind parameters and terminal checksums."""
    out = {"T": schedule.T, "kernel": schedule.kernel, "kinds": {}}
    for name, s in (("category", schedule.category), ("code", schedule.code),
                    ("relation", schedule.relation)):
        out["kinds"][name] = {
            "k": s.k,
            "freeze_empty": s.freeze_empty,
            "alphas": [float(v) for v in s.alphas],
            "betas": [float(v) for v in s.betas],
            "gammas": [float(v) for v in s.gammas],
            "terminal_mask_mass": s.terminal_mask_mass(),
            "qbar_T_sha256": hashlib.sha256(np.ascontiguousarray(s.qbar[s.T]).tobytes()).hexdigest(),
        }
    return out
