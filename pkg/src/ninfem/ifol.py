"""Physics-informed operator learning on discrete FEM residuals.

The loss is the weighted-residual functional L = sum_e (U^e)^T r^e with the
neural field acting as its own test function.  Its gradient with respect to
the predicted nodal field is, in the default detached mode, exactly the
assembled residual.  Per-sample latent codes are found by a few gradient
steps on this loss starting from zero (PDE encoding); the synthesizer and
modulator weights are meta-trained across samples with Adam.
"""

from __future__ import annotations

import csv
import time
from contextlib import nullcontext
from dataclasses import dataclass, field

import numpy as np

from ninfem import neural_field as nf
from ninfem.assembly import (
    HyperelasticProblem,
    ThermoMechProblem,
    apply_dirichlet,
    hyperelastic_internal_force,
    thermal_internal_force,
    thermomech_mechanical_force,
)
from ninfem.material import PhaseField, ThermoMechParams
from ninfem.mesh import (
    ConfigurationError,
    StructuredMesh,
    element_geometry,
    gauss_rule,
)

# Threshold for the training-time energy guard: below this J the stress
# switches to a C^1 extension with a bounded, monotone restoring force, so
# inadmissible states early in training produce finite, well-scaled
# gradients that still push deformations back toward J > 0.
TRAIN_CLAMP_J = 0.1


@dataclass
class TrainConfig:
    k_encode: int = 3
    alpha: float = 1e-2  # latent (encoding) learning rate
    lr: float = 1e-5  # outer training learning rate
    batch_size: int = 50
    epochs: int = 2000
    grad_normalization: bool = True
    detach_residual: bool = True
    fast_trig: bool = True  # float32 sin/cos inside the net (training only)
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    divergence_factor: float = 1e6

    def __post_init__(self):
        if self.k_encode < 0:
            raise ConfigurationError("k_encode must be >= 0")
        if self.alpha <= 0 or self.lr < 0:
            raise ConfigurationError("learning rates must be positive")


def normalized_coords(mesh: StructuredMesh) -> np.ndarray:
    """Node coordinates mapped to [-1, 1]^dim, the network's input range."""
    return 2.0 * mesh.node_coords / np.asarray(mesh.extents) - 1.0


@dataclass
class SampleBatch:
    """A batch of control instances sharing one mesh and BC layout.

    For the property->solution operator the per-sample data are Gauss-point
    property fields; for the BC->solution operator they are per-sample
    Dirichlet values (properties shared).  Either axis may also be a single
    instance (batch size 1).
    """

    mesh: StructuredMesh
    kind: str  # "hyperelastic" | "thermomech"
    dirichlet_mask: np.ndarray
    dirichlet_values: np.ndarray  # (n_dof,) shared or (B, n_dof) per sample
    mu_gp: np.ndarray | None = None  # (B, n_el, n_gp) or (n_el, n_gp)
    kappa_gp: np.ndarray | None = None
    phi_gp: np.ndarray | None = None  # thermomech property field
    params: ThermoMechParams | None = None
    geom: object = None

    def __post_init__(self):
        if self.geom is None:
            self.geom = element_geometry(self.mesh, 0, gauss_rule(self.mesh.dim))

    @property
    def dofs_per_node(self) -> int:
        if self.kind == "hyperelastic":
            return self.mesh.dim
        return self.mesh.dim + 1

    @property
    def n_dof(self) -> int:
        return self.mesh.n_nodes * self.dofs_per_node

    @property
    def batched(self) -> bool:
        return (
            (self.mu_gp is not None and self.mu_gp.ndim == 3)
            or (self.phi_gp is not None and self.phi_gp.ndim == 3)
            or self.dirichlet_values.ndim == 2
        )

    @property
    def n_samples(self) -> int:
        if self.mu_gp is not None and self.mu_gp.ndim == 3:
            return self.mu_gp.shape[0]
        if self.phi_gp is not None and self.phi_gp.ndim == 3:
            return self.phi_gp.shape[0]
        if self.dirichlet_values.ndim == 2:
            return self.dirichlet_values.shape[0]
        return 1

    def raw_residual(self, U: np.ndarray, clamp_j: float | None = None) -> np.ndarray:
        if self.kind == "hyperelastic":
            return hyperelastic_internal_force(
                self.geom,
                self.mesh.elements,
                U,
                self.mu_gp,
                self.kappa_gp,
                self.mesh.dim,
                clamp_j=clamp_j,
            )
        # Thermomech: merge of mechanical and thermal residuals
        problem = self._merged_problem_template()
        return problem.raw_residual(U, clamp_j=clamp_j)

    def _merged_problem_template(self) -> ThermoMechProblem:
        return ThermoMechProblem(
            mesh=self.mesh,
            phi_gp=self.phi_gp,
            params=self.params,
            dirichlet_mask=self.dirichlet_mask,
            dirichlet_values=self._values_for(0),
            geom=self.geom,
        )

    def _values_for(self, i: int) -> np.ndarray:
        if self.dirichlet_values.ndim == 2:
            return self.dirichlet_values[i]
        return self.dirichlet_values

    def apply_bc(self, U: np.ndarray) -> np.ndarray:
        """Hard Dirichlet overwrite at full load (Remark-style constraint)."""
        out = np.array(U, dtype=float, copy=True)
        mask = self.dirichlet_mask
        vals = self.dirichlet_values
        if vals.ndim == 2:
            out[..., mask] = vals[..., mask]
        else:
            out[..., mask] = vals[mask]
        return out

    def subset(self, idx) -> "SampleBatch":
        idx = np.atleast_1d(idx)

        def take(a):
            if a is None:
                return None
            return a[idx] if a.ndim == 3 else a

        vals = (
            self.dirichlet_values[idx]
            if self.dirichlet_values.ndim == 2
            else self.dirichlet_values
        )
        return SampleBatch(
            mesh=self.mesh,
            kind=self.kind,
            dirichlet_mask=self.dirichlet_mask,
            dirichlet_values=vals,
            mu_gp=take(self.mu_gp),
            kappa_gp=take(self.kappa_gp),
            phi_gp=take(self.phi_gp),
            params=self.params,
            geom=self.geom,
        )

    def sample(self, i: int) -> "SampleBatch":
        """Single-sample view (batch axes dropped)."""
        sub = self.subset([i])

        def squeeze(a):
            return None if a is None else a[0]

        return SampleBatch(
            mesh=self.mesh,
            kind=self.kind,
            dirichlet_mask=self.dirichlet_mask,
            dirichlet_values=(
                self.dirichlet_values[i]
                if self.dirichlet_values.ndim == 2
                else self.dirichlet_values
            ),
            mu_gp=squeeze(sub.mu_gp) if sub.mu_gp is not None and sub.mu_gp.ndim == 3 else sub.mu_gp,
            kappa_gp=squeeze(sub.kappa_gp) if sub.kappa_gp is not None and sub.kappa_gp.ndim == 3 else sub.kappa_gp,
            phi_gp=squeeze(sub.phi_gp) if sub.phi_gp is not None and sub.phi_gp.ndim == 3 else sub.phi_gp,
            params=self.params,
            geom=self.geom,
        )

    def problem(self, i: int = 0):
        """FEM problem object for sample i (Newton solver interface)."""
        s = self.sample(i)
        if self.kind == "hyperelastic":
            return HyperelasticProblem(
                mesh=s.mesh,
                mu_gp=s.mu_gp,
                kappa_gp=s.kappa_gp,
                dirichlet_mask=s.dirichlet_mask,
                dirichlet_values=s.dirichlet_values,
                geom=s.geom,
            )
        return ThermoMechProblem(
            mesh=s.mesh,
            phi_gp=s.phi_gp,
            params=s.params,
            dirichlet_mask=s.dirichlet_mask,
            dirichlet_values=s.dirichlet_values,
            geom=s.geom,
        )


def hyperelastic_batch(
    mesh: StructuredMesh,
    phases: list[PhaseField],
    dirichlet_mask: np.ndarray,
    dirichlet_values: np.ndarray,
) -> SampleBatch:
    """Property->solution operator batch from nodal phase fields."""
    geom = element_geometry(mesh, 0, gauss_rule(mesh.dim))
    phi = np.stack(
        [p.at_gauss_points(mesh.elements, geom.N) for p in phases]
    )  # (B, n_el, n_gp)
    mu = np.stack([p.mu(phi[i]) for i, p in enumerate(phases)])
    kappa = np.stack([p.kappa(phi[i]) for i, p in enumerate(phases)])
    return SampleBatch(
        mesh=mesh,
        kind="hyperelastic",
        dirichlet_mask=dirichlet_mask,
        dirichlet_values=dirichlet_values,
        mu_gp=mu,
        kappa_gp=kappa,
        geom=geom,
    )


def bc_batch(
    mesh: StructuredMesh,
    phase: PhaseField,
    dirichlet_mask: np.ndarray,
    dirichlet_values_per_sample: np.ndarray,
) -> SampleBatch:
    """BC->solution operator batch: shared properties, per-sample BC values."""
    geom = element_geometry(mesh, 0, gauss_rule(mesh.dim))
    phi = phase.at_gauss_points(mesh.elements, geom.N)
    return SampleBatch(
        mesh=mesh,
        kind="hyperelastic",
        dirichlet_mask=dirichlet_mask,
        dirichlet_values=dirichlet_values_per_sample,
        mu_gp=phase.mu(phi),
        kappa_gp=phase.kappa(phi),
        geom=geom,
    )


# ---------------------------------------------------------------------------
# Loss, encoding, training


def predict_nodal_field(
    params: nf.ModelParams, latent: np.ndarray, sample: SampleBatch
) -> tuple[np.ndarray, dict]:
    """Network output as a DOF vector with hard Dirichlet values applied."""
    coords = normalized_coords(sample.mesh)
    out, cache = nf.forward_with_cache(params, latent, coords)
    U = out.reshape(out.shape[:-2] + (sample.n_dof,))
    return sample.apply_bc(U), cache


def pde_loss(
    params: nf.ModelParams,
    latent: np.ndarray,
    sample: SampleBatch,
    detach_residual: bool = True,
    U: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Weighted-residual loss and its gradient with respect to the nodal field.

    In detached mode the gradient is the assembled residual itself (the
    residual is treated as stationary under the field variation); the full
    mode adds the K^T U term from differentiating through the residual.
    """
    if U is None:
        U, _ = predict_nodal_field(params, latent, sample)
    r = sample.raw_residual(U, clamp_j=TRAIN_CLAMP_J)
    loss = np.sum(U * r, axis=-1)
    if detach_residual:
        grad = r
    else:
        if U.ndim != 1:
            raise ConfigurationError("full differentiation supports single samples")
        K = sample.problem(0).tangent(U)
        grad = r + K.T @ U
    return loss, grad


def _field_cotangent(grad_U: np.ndarray, sample: SampleBatch) -> np.ndarray:
    """Mask constrained DOFs (they are overwritten, not predicted) and
    reshape the loss gradient to the network's output layout."""
    cot = np.array(grad_U, copy=True)
    cot[..., sample.dirichlet_mask] = 0.0
    return cot.reshape(
        cot.shape[:-1] + (sample.mesh.n_nodes, sample.dofs_per_node)
    )


def encode(
    params: nf.ModelParams,
    sample: SampleBatch,
    k_encode: int = 3,
    alpha: float = 1e-2,
    detach_residual: bool = True,
) -> np.ndarray:
    """PDE encoding: k_encode gradient-descent steps on the loss from l = 0.

    Performs exactly ``k_encode`` residual assemblies and no linear solves.
    Returns a latent of shape (latent_dim,) or (B, latent_dim).
    """
    latent_dim = params.V[0].shape[1] if params.V else 0
    shape = (sample.n_samples, latent_dim) if sample.batched else (latent_dim,)
    latent = np.zeros(shape)
    coords = normalized_coords(sample.mesh)
    for _ in range(k_encode):
        out, cache = nf.forward_with_cache(params, latent, coords)
        U = sample.apply_bc(out.reshape(out.shape[:-2] + (sample.n_dof,)))
        _, grad_U = pde_loss(
            params, latent, sample, detach_residual=detach_residual, U=U
        )
        if not np.all(np.isfinite(grad_U)):
            raise FloatingPointError("NaN/inf gradient during PDE encoding")
        cot = _field_cotangent(grad_U, sample)
        _, grad_l = nf.backward(
            params, latent, coords, cot, cache=cache, latent_only=True
        )
        latent = latent - alpha * grad_l
    return latent


def supervised_loss(
    params: nf.ModelParams,
    latent: np.ndarray,
    sample: SampleBatch,
    reference_U: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Mean-squared nodal error against offline reference solutions."""
    if reference_U is None:
        raise ConfigurationError("supervised mode requires reference solutions")
    U, _ = predict_nodal_field(params, latent, sample)
    diff = U - reference_U
    loss = np.mean(diff**2, axis=-1)
    grad = 2.0 * diff / U.shape[-1]
    return loss, grad


class _Adam:
    """Adam over a ModelParams pytree."""

    def __init__(self, params: nf.ModelParams, lr, beta1, beta2, eps):
        self.lr, self.b1, self.b2, self.eps = lr, beta1, beta2, eps
        self.m = nf.zeros_like_params(params)
        self.v = nf.zeros_like_params(params)
        self.t = 0

    def step(self, params: nf.ModelParams, grads: nf.ModelParams):
        self.t += 1
        for group in ("W", "b", "V", "c"):
            ps = getattr(params, group)
            gs = getattr(grads, group)
            ms = getattr(self.m, group)
            vs = getattr(self.v, group)
            for p, g, m, v in zip(ps, gs, ms, vs):
                m *= self.b1
                m += (1 - self.b1) * g
                v *= self.b2
                v += (1 - self.b2) * g * g
                mhat = m / (1 - self.b1**self.t)
                vhat = v / (1 - self.b2**self.t)
                p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


@dataclass
class TrainLogRow:
    epoch: int
    mean_loss: float
    grad_norm: float
    seconds: float


def train(
    config: TrainConfig,
    params: nf.ModelParams,
    batch: SampleBatch,
    reference_U: np.ndarray | None = None,
    log_path=None,
    progress=None,
) -> tuple[nf.ModelParams, list[TrainLogRow]]:
    """Meta-training: re-encode each mini-batch from zero, then one Adam step.

    With ``reference_U`` given, the supervised mean-squared loss replaces
    the physics loss for the outer update (encoding still uses physics).
    """
    params = params.copy()
    rng = np.random.default_rng(config.seed)
    optimizer = _Adam(params, config.lr, config.beta1, config.beta2, config.eps)
    coords = normalized_coords(batch.mesh)
    n = batch.n_samples
    log: list[TrainLogRow] = []
    initial_loss = None
    t_start = time.perf_counter()
    trig_ctx = nf.reduced_precision_trig if config.fast_trig else nullcontext

    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        epoch_losses = []
        last_gnorm = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            mini = batch.subset(idx)
            ref = reference_U[idx] if reference_U is not None else None

            with trig_ctx():
                loss, grads, gnorm = _train_step(config, params, mini, coords, ref)
            if config.grad_normalization and gnorm > 0:
                _scale_grads(grads, 1.0 / gnorm)
            optimizer.step(params, grads)
            epoch_losses.append(np.mean(loss))
            last_gnorm = gnorm

        mean_loss = float(np.mean(epoch_losses))
        if initial_loss is None:
            initial_loss = abs(mean_loss) if mean_loss != 0 else 1.0
        if not np.isfinite(mean_loss) or abs(mean_loss) > config.divergence_factor * initial_loss:
            raise FloatingPointError(
                f"training diverged at epoch {epoch}: loss {mean_loss:g}"
            )
        log.append(
            TrainLogRow(
                epoch=epoch,
                mean_loss=mean_loss,
                grad_norm=float(last_gnorm),
                seconds=time.perf_counter() - t_start,
            )
        )
        if progress is not None:
            progress(log[-1])

    if log_path is not None:
        write_training_log(log_path, log)
    return params, log


def _train_step(config, params, mini, coords, ref):
    """One minibatch: re-encode from zero, evaluate the loss, backprop."""
    latent = encode(
        params,
        mini,
        k_encode=config.k_encode,
        alpha=config.alpha,
        detach_residual=config.detach_residual,
    )
    out, cache = nf.forward_with_cache(params, latent, coords)
    U = mini.apply_bc(out.reshape(out.shape[:-2] + (mini.n_dof,)))
    if ref is not None:
        loss, grad_U = supervised_loss(params, latent, mini, ref)
    else:
        loss, grad_U = pde_loss(
            params, latent, mini, detach_residual=config.detach_residual, U=U
        )
    cot = _field_cotangent(grad_U, mini)
    grads, _ = nf.backward(params, latent, coords, cot, cache=cache)
    _scale_grads(grads, 1.0 / mini.n_samples)
    gnorm = np.linalg.norm(grads.flat_synth_mod())
    return loss, grads, gnorm


def _scale_grads(grads: nf.ModelParams, factor: float) -> None:
    for group in ("W", "b", "V", "c"):
        for g in getattr(grads, group):
            g *= factor


def write_training_log(path, log: list[TrainLogRow]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "grad_norm", "seconds"])
        for row in log:
            writer.writerow(
                [row.epoch, repr(row.mean_loss), repr(row.grad_norm), f"{row.seconds:.3f}"]
            )


def infer(
    params: nf.ModelParams,
    sample: SampleBatch,
    k_encode: int = 3,
    alpha: float = 1e-2,
) -> np.ndarray:
    """Prediction on the sample's mesh: encode there, evaluate, enforce BCs.

    The sample may live on a finer mesh than the training one (zero-shot
    super-resolution); encoding always runs on the target mesh's residual.
    """
    latent = encode(params, sample, k_encode=k_encode, alpha=alpha)
    U, _ = predict_nodal_field(params, latent, sample)
    return U
