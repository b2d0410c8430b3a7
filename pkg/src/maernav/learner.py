"""Soft actor-critic with a Gaussian-mixture actor and a reciprocal LiDAR input transform."""

from __future__ import annotations

import copy
import math
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .robot import DEFAULT_ROBOT, Action, RobotSpec

LOG_STD_MIN, LOG_STD_MAX = -20.0, 2.0
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class TrainerConfig:
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 3e-4
    critic_lr: float = 3e-4
    alpha_lr: float = 3e-4
    batch_size: int = 256
    n_components: int = 3
    hidden: int = 256
    n_layers: int = 4
    leaky_slope: float = 0.01
    beta_init: float = 1.0
    init_alpha: float = 1.0
    target_entropy: float = -2.0
    warmup_steps: int = 5000
    utd_ratio: int = 1
    buffer_capacity: int = 1_000_000

    def __post_init__(self):
        if not 0.0 < self.tau <= 1.0:
            raise ValueError("tau must lie in (0, 1]")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.n_components < 1:
            raise ValueError("n_components must be >= 1")
        if self.hidden < 1 or self.n_layers < 1:
            raise ValueError("network must have at least one hidden unit and layer")

    @classmethod
    def field_types(cls) -> dict[str, type]:
        return {f.name: type(getattr(cls(), f.name)) for f in fields(cls)}


class LidarPrior(nn.Module):
    """Elementwise ``1 / (l + beta)`` with a trainable offset ``beta``."""

    def __init__(self, beta_init: float = 1.0):
        super().__init__()
        self.beta = nn.Parameter(torch.tensor(float(beta_init)))

    def forward(self, ranges: torch.Tensor) -> torch.Tensor:
        return lidar_prior(ranges, self.beta)


def lidar_prior(ranges, beta):
    denom = ranges + beta
    if bool((denom <= 0).any()):
        raise FloatingPointError("lidar_prior: range + beta must be positive")
    return 1.0 / denom


def mlp(in_dim: int, out_dim: int, hidden: int, n_layers: int, slope: float) -> nn.Sequential:
    layers: list[nn.Module] = []
    d = in_dim
    for _ in range(n_layers):
        layers += [nn.Linear(d, hidden), nn.LeakyReLU(slope)]
        d = hidden
    layers.append(nn.Linear(d, out_dim))
    return nn.Sequential(*layers)


class Mixture(NamedTuple):
    logits: torch.Tensor  # (B, K)
    means: torch.Tensor  # (B, K, 2), pre-squash
    log_stds: torch.Tensor  # (B, K, 2), clamped

    @property
    def weights(self) -> torch.Tensor:
        return torch.softmax(self.logits, dim=-1)

    @property
    def stds(self) -> torch.Tensor:
        return self.log_stds.exp()


class Actor(nn.Module):
    def __init__(self, n_sectors: int, cfg: TrainerConfig):
        super().__init__()
        self.n_sectors = n_sectors
        self.k = cfg.n_components
        self.prior = LidarPrior(cfg.beta_init)
        self.body = mlp(n_sectors + 4, self.k * 5, cfg.hidden, cfg.n_layers, cfg.leaky_slope)

    def forward(self, obs: torch.Tensor) -> Mixture:
        if obs.shape[-1] != self.n_sectors + 4:
            raise ValueError(f"observation has {obs.shape[-1]} entries, expected {self.n_sectors + 4}")
        x = torch.cat([self.prior(obs[..., : self.n_sectors]), obs[..., self.n_sectors:]], dim=-1)
        out = self.body(x)
        k = self.k
        logits = out[..., :k]
        means = out[..., k: 3 * k].reshape(*out.shape[:-1], k, 2)
        log_stds = out[..., 3 * k:].reshape(*out.shape[:-1], k, 2).clamp(LOG_STD_MIN, LOG_STD_MAX)
        return Mixture(logits, means, log_stds)


class TwinCritic(nn.Module):
    """Two independent Q(x, a) networks evaluated together.

    Parameters are stacked along a leading axis of size 2 so both critics run
    as one batched matmul per layer; they share no values. Each critic has
    its own LiDAR offset ``beta``. Actions enter normalized to [-1, 1].
    """

    def __init__(self, n_sectors: int, cfg: TrainerConfig, action_scale: torch.Tensor):
        super().__init__()
        self.n_sectors = n_sectors
        self.slope = cfg.leaky_slope
        self.beta = nn.Parameter(torch.full((2, 1, 1), float(cfg.beta_init)))
        self.register_buffer("action_scale", action_scale.clone())
        dims = [n_sectors + 6] + [cfg.hidden] * cfg.n_layers + [1]
        self.weights = nn.ParameterList(nn.Parameter(torch.zeros(2, a, b)) for a, b in zip(dims[:-1], dims[1:]))
        self.biases = nn.ParameterList(nn.Parameter(torch.zeros(2, 1, b)) for b in dims[1:])

    def forward(self, obs: torch.Tensor, action: torch.Tensor) -> torch.Tensor:
        """Returns (2, B): row ``i`` is critic ``i``."""
        if obs.shape[-1] != self.n_sectors + 4 or action.shape[-1] != 2:
            raise ValueError("critic input shape mismatch")
        m = self.n_sectors
        q = lidar_prior(obs[..., :m].unsqueeze(0), self.beta)
        rest = torch.cat([obs[..., m:], action / self.action_scale], dim=-1)
        x = torch.cat([q, rest.unsqueeze(0).expand(2, *rest.shape)], dim=-1)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            x = torch.baddbmm(b, x, w)
            if i < last:
                x = F.leaky_relu(x, self.slope)
        return x.squeeze(-1)

    def linear_layers(self):
        """(weight, bias, fan_in) per layer, for seeded initialization."""
        return [(w, b, w.shape[1]) for w, b in zip(self.weights, self.biases)]


def action_scale(spec: RobotSpec = DEFAULT_ROBOT, dtype=torch.float32) -> torch.Tensor:
    return torch.tensor([spec.v_max, spec.w_max], dtype=dtype)


def mixture_log_density(mix: Mixture, u: torch.Tensor) -> torch.Tensor:
    """Exact log-density of pre-squash ``u`` (B, 2) under the full K-component mixture."""
    z = (u.unsqueeze(-2) - mix.means) / mix.stds
    comp = (-0.5 * z.pow(2) - mix.log_stds - 0.5 * LOG_2PI).sum(-1)
    return torch.logsumexp(torch.log_softmax(mix.logits, dim=-1) + comp, dim=-1)


def squash_log_det(u: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    """log |d action / d u| for ``action = scale * tanh(u)``."""
    log_dtanh = 2.0 * (math.log(2.0) - u - F.softplus(-2.0 * u))
    return (log_dtanh + torch.log(scale)).sum(-1)


def squashed_log_prob(mix: Mixture, u: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    return mixture_log_density(mix, u) - squash_log_det(u, scale)


def sample_action(mix: Mixture, generator: torch.Generator | None, scale: torch.Tensor):
    """Reparameterized draw: categorical component, Gaussian pre-squash sample, tanh, scale.

    Returns ``(action, log_prob, u)``; no gradient flows through the component choice.
    """
    batch_shape = mix.logits.shape[:-1]
    w = mix.weights.reshape(-1, mix.logits.shape[-1])
    k = torch.multinomial(w.detach(), 1, generator=generator).reshape(*batch_shape, 1, 1).expand(*batch_shape, 1, 2)
    mu = mix.means.gather(-2, k).squeeze(-2)
    std = mix.stds.gather(-2, k).squeeze(-2)
    eps = torch.randn(mu.shape, generator=generator, dtype=mu.dtype)
    u = mu + std * eps
    action = torch.tanh(u) * scale
    return action, squashed_log_prob(mix, u, scale), u


def deterministic_action(mix: Mixture, scale: torch.Tensor) -> torch.Tensor:
    """Squashed mean of the heaviest component; ties go to the lowest index."""
    k = torch.argmax(mix.logits, dim=-1)
    idx = k[..., None, None].expand(*k.shape, 1, 2)
    return torch.tanh(mix.means.gather(-2, idx).squeeze(-2)) * scale


def log_prob_of_action(mix: Mixture, action: torch.Tensor, scale: torch.Tensor) -> torch.Tensor:
    u = torch.atanh(action / scale)
    return squashed_log_prob(mix, u, scale)


def soft_target(reward, done, min_q_next, log_prob_next, alpha, gamma):
    return reward + gamma * (1.0 - done) * (min_q_next - alpha * log_prob_next)


@torch.no_grad()
def polyak_update(target: nn.Module, online: nn.Module, tau: float) -> None:
    for t, o in zip(target.parameters(), online.parameters()):
        # lerp is exact at both tau=0 and tau=1
        t.lerp_(o, tau)


class LossReport(NamedTuple):
    critic1: float
    critic2: float
    actor: float
    alpha: float
    alpha_value: float


class SACAgent:
    """Actor, twin critics with targets, and an adaptive entropy temperature."""

    def __init__(self, cfg: TrainerConfig = TrainerConfig(), spec: RobotSpec = DEFAULT_ROBOT, seed: int = 0):
        self.cfg = cfg
        self.spec = spec
        self.generator = torch.Generator().manual_seed(seed)
        self.scale = action_scale(spec)
        m = spec.minpool_sectors
        init = torch.Generator().manual_seed(seed + 1)
        self.actor = Actor(m, cfg)
        self.critic = TwinCritic(m, cfg, self.scale)
        _reinit(self.actor, init)
        _reinit(self.critic, init)
        self.target = copy.deepcopy(self.critic)
        for p in self.target.parameters():
            p.requires_grad_(False)
        self.log_alpha = nn.Parameter(torch.tensor(math.log(cfg.init_alpha)))
        self.actor_opt = torch.optim.Adam(self.actor.parameters(), lr=cfg.actor_lr, fused=True)
        self.critic_opt = torch.optim.Adam(self.critic.parameters(), lr=cfg.critic_lr, fused=True)
        self.alpha_opt = torch.optim.Adam([self.log_alpha], lr=cfg.alpha_lr, fused=True)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return self.log_alpha.detach().exp().item()

    def named_modules_for_state(self) -> dict[str, nn.Module]:
        return {"actor": self.actor, "critic": self.critic, "target": self.target}

    @torch.no_grad()
    def act(self, obs, deterministic: bool = False) -> Action:
        x = torch.as_tensor(np.asarray(obs, dtype=np.float32))[None]
        mix = self.actor(x)
        if deterministic:
            a = deterministic_action(mix, self.scale)[0]
        else:
            a = sample_action(mix, self.generator, self.scale)[0][0]
        return Action(float(a[0]), float(a[1]))

    def update(self, batch) -> LossReport:
        cfg = self.cfg
        obs = torch.as_tensor(batch.obs)
        act = torch.as_tensor(batch.action)
        rew = torch.as_tensor(batch.reward)
        nxt = torch.as_tensor(batch.next_obs)
        done = torch.as_tensor(batch.done)
        if len(obs) == 0:
            raise ValueError("empty batch")
        alpha = self.log_alpha.exp().detach()

        with torch.no_grad():
            a_next, logp_next, _ = sample_action(self.actor(nxt), self.generator, self.scale)
            q_next = self.target(nxt, a_next).min(dim=0).values
            y = soft_target(rew, done, q_next, logp_next, alpha, cfg.gamma)
        q = self.critic(obs, act)
        l1 = F.mse_loss(q[0], y)
        l2 = F.mse_loss(q[1], y)
        self.critic_opt.zero_grad()
        (l1 + l2).backward()
        self.critic_opt.step()

        critic_params = list(self.critic.parameters())
        for p in critic_params:
            p.requires_grad_(False)
        a_new, logp, _ = sample_action(self.actor(obs), self.generator, self.scale)
        q_new = self.critic(obs, a_new).min(dim=0).values
        actor_loss = (alpha * logp - q_new).mean()
        self.actor_opt.zero_grad()
        actor_loss.backward()
        self.actor_opt.step()
        for p in critic_params:
            p.requires_grad_(True)

        alpha_loss = (self.log_alpha.exp() * (-logp.detach() - cfg.target_entropy)).mean()
        self.alpha_opt.zero_grad()
        alpha_loss.backward()
        self.alpha_opt.step()

        polyak_update(self.target, self.critic, cfg.tau)
        self.updates += 1
        return LossReport(l1.item(), l2.item(), actor_loss.item(), alpha_loss.item(), self.alpha)

    # -- state ---------------------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, mod in self.named_modules_for_state().items():
            for pname, t in mod.state_dict().items():
                out[f"{name}/{pname}"] = t.detach().numpy().copy()
        out["log_alpha"] = self.log_alpha.detach().numpy().copy()
        for oname, opt in (("actor_opt", self.actor_opt), ("critic_opt", self.critic_opt), ("alpha_opt", self.alpha_opt)):
            for pid, st in opt.state_dict()["state"].items():
                for key, val in st.items():
                    out[f"{oname}/{pid}/{key}"] = torch.as_tensor(val).detach().numpy().copy()
        out["torch_rng"] = self.generator.get_state().numpy().copy()
        out["updates"] = np.array(self.updates, dtype=np.int64)
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name, mod in self.named_modules_for_state().items():
            sd = {k[len(name) + 1:]: torch.from_numpy(np.array(v)) for k, v in arrays.items() if k.startswith(name + "/")}
            mod.load_state_dict(sd)
        with torch.no_grad():
            self.log_alpha.copy_(torch.from_numpy(np.array(arrays["log_alpha"])))
        for oname, opt in (("actor_opt", self.actor_opt), ("critic_opt", self.critic_opt), ("alpha_opt", self.alpha_opt)):
            sd = opt.state_dict()
            state: dict[int, dict] = {}
            for k, v in arrays.items():
                if k.startswith(oname + "/"):
                    _, pid, key = k.split("/")
                    state.setdefault(int(pid), {})[key] = torch.from_numpy(np.array(v))
            sd["state"] = state
            opt.load_state_dict(sd)
        self.generator.set_state(torch.from_numpy(np.array(arrays["torch_rng"])))
        self.updates = int(arrays["updates"])


def _reinit(net: nn.Module, gen: torch.Generator) -> None:
    """Seeded re-initialization matching torch's default Linear scheme; output layers start small."""
    if isinstance(net, TwinCritic):
        layers = net.linear_layers()
    else:
        layers = [(m.weight, m.bias, m.in_features) for m in net.modules() if isinstance(m, nn.Linear)]
    with torch.no_grad():
        for i, (w, b, fan_in) in enumerate(layers):
            bound = 1.0 / math.sqrt(fan_in)
            if i == len(layers) - 1:
                bound *= 0.1
            w.uniform_(-bound, bound, generator=gen)
            b.uniform_(-bound, bound, generator=gen)


# -- gradient checking -------------------------------------------------------


def _flat_params(module: nn.Module) -> list[torch.Tensor]:
    return [p for p in module.parameters() if p.requires_grad]


def _fd_compare(params: list[torch.Tensor], fn, h: float, floor: float) -> float:
    out = fn()
    # differences below this are unresolvable by central differences at step h
    noise = floor * max(1.0, abs(out.item()))
    grads = torch.autograd.grad(out, params, allow_unused=True)
    worst = 0.0
    with torch.no_grad():
        for p, g in zip(params, grads):
            g = torch.zeros_like(p) if g is None else g
            flat = p.view(-1)
            gflat = g.reshape(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + h
                fp = fn().item()
                flat[i] = orig - h
                fm = fn().item()
                flat[i] = orig
                fd = (fp - fm) / (2.0 * h)
                ga = gflat[i].item()
                worst = max(worst, abs(ga - fd) / max(abs(ga), abs(fd), noise))
    return worst


def gradient_check(actor: Actor, critic: TwinCritic, obs: torch.Tensor, actions: torch.Tensor, scale: torch.Tensor,
                   h: float = 1e-5, floor: float = 1e-6) -> dict[str, float]:
    """Max relative error between autograd and central differences over every parameter.

    Checks the scalar sums of ``log pi(a|x)`` for the actor and ``Q(x, a)``
    for the critic. Runs in float64 on copies of the given networks. The
    error of each entry is ``|g - fd| / max(|g|, |fd|, floor * max(1, |f|))``;
    the floor keeps gradients far below the finite-difference resolution
    (negligible mixture components) from dominating.
    """
    actor = copy.deepcopy(actor).double()
    critic = copy.deepcopy(critic).double()
    obs, actions, scale = obs.double(), actions.double(), scale.double()
    a_err = _fd_compare(_flat_params(actor), lambda: log_prob_of_action(actor(obs), actions, scale).sum(), h, floor)
    c_err = _fd_compare(_flat_params(critic), lambda: critic(obs, actions).sum(), h, floor)
    return {"actor": a_err, "critic": c_err, "max": max(a_err, c_err)}


def config_to_dict(cfg: TrainerConfig) -> dict:
    return asdict(cfg)
