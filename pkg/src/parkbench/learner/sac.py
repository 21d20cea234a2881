"""Soft actor-critic with twin layer-normalized critics and a privileged
autoencoder branch.

The actor consumes the raw privileged observation vector; the critics
consume an autoencoder latent of the same vector concatenated with a
learned action embedding. Layer normalization ahead of each critic's
final linear layer keeps |Q| bounded by the product of the final weight
norm and the normalized feature norm, which tames value overestimation
when high-quality intervention data floods the replay.

Losses (all minimized):
  twin critic regression to the entropy-regularized min-target,
  reparametrized actor loss, L1 reconstruction of the privileged vector
  (batch mean of per-sample L1 norms), and the standard log-temperature
  objective against a fixed entropy target.

Gradients are hand-derived (see ``nets``) and validated against central
finite differences in the test suite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..env import Transition
from ..vehicle import Action
from .nets import Adam, Mlp, flatten_grads, log_cosh

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LearnerConfig:
    hidden: tuple = (128, 128)
    latent_dim: int = 32
    embed_dim: int = 32
    embed_hidden: int = 32
    ae_hidden: int = 128
    gamma: float = 0.99
    tau: float = 0.005
    lr: float = 3e-4
    lambda_ae: float = 1.0
    target_entropy: float = -2.0
    init_alpha: float = 0.2
    log_std_min: float = -5.0
    log_std_max: float = 2.0
    # when True, the critic regression also shapes the encoder through the
    # latent; by default the encoder trains only on reconstruction
    train_encoder_from_critic: bool = False


@dataclass
class PolicyParameters:
    """All learnable tensors, grouped by module."""

    actor: Mlp
    critic1: Mlp
    critic2: Mlp
    target1: Mlp
    target2: Mlp
    encoder: Mlp
    decoder: Mlp
    embed: Mlp
    log_alpha: np.ndarray = field(default_factory=lambda: np.zeros(1))

    def named_tensors(self) -> dict[str, np.ndarray]:
        out = {}
        modules = {"actor": self.actor, "critic1": self.critic1, "critic2": self.critic2,
                   "target1": self.target1, "target2": self.target2,
                   "encoder": self.encoder, "decoder": self.decoder, "embed": self.embed}
        for mod_name, mod in modules.items():
            for name, arr in zip(mod.param_names(), mod.params()):
                out[f"{mod_name}.{name}"] = arr
        out["log_alpha"] = self.log_alpha
        return out


class SoftActorCritic:
    """From-scratch SAC over privileged observation vectors."""

    def __init__(self, obs_dim: int, action_bounds: tuple[float, float],
                 config: LearnerConfig | None = None, seed: int | None = None):
        self.obs_dim = obs_dim
        self.bounds = np.asarray(action_bounds, dtype=float)
        self.config = cfg = config or LearnerConfig()
        self._rng = np.random.default_rng(seed)
        rng = self._rng
        act_sizes = [obs_dim, *cfg.hidden, 4]
        q_in = cfg.latent_dim + cfg.embed_dim
        self.params = PolicyParameters(
            actor=Mlp(act_sizes, rng),
            critic1=Mlp([q_in, *cfg.hidden, 1], rng, final_layer_norm=True),
            critic2=Mlp([q_in, *cfg.hidden, 1], rng, final_layer_norm=True),
            target1=None,  # filled below
            target2=None,
            encoder=Mlp([obs_dim, cfg.ae_hidden, cfg.latent_dim], rng),
            decoder=Mlp([cfg.latent_dim, cfg.ae_hidden, obs_dim], rng),
            embed=Mlp([2, cfg.embed_hidden, cfg.embed_dim], rng),
            log_alpha=np.array([math.log(cfg.init_alpha)]),
        )
        p = self.params
        # move each optimizer group into one contiguous vector so Adam
        # touches a single array per group
        self._actor_flat = self._flatten([p.actor])
        self._critic_flat = self._flatten([p.critic1, p.critic2, p.embed])
        self._ae_flat = self._flatten([p.encoder, p.decoder])
        self._actor_gflat = np.empty_like(self._actor_flat)
        self._critic_gflat = np.empty_like(self._critic_flat)
        self._ae_gflat = np.empty_like(self._ae_flat)
        p.target1 = p.critic1.clone()
        p.target2 = p.critic2.clone()
        self.opt_actor = Adam([self._actor_flat], cfg.lr)
        critic_group = [self._critic_flat]
        if cfg.train_encoder_from_critic:
            # the encoder lives in the AE vector; give the critic optimizer
            # its views as extra entries
            critic_group += p.encoder.params()
        self.opt_critic = Adam(critic_group, cfg.lr)
        self.opt_ae = Adam([self._ae_flat], cfg.lr)
        self.opt_alpha = Adam([p.log_alpha], cfg.lr)
        self.updates_done = 0

    @staticmethod
    def _flatten(modules) -> np.ndarray:
        total = sum(arr.size for m in modules for arr in m.params())
        flat = np.empty(total)
        offset = 0
        for m in modules:
            offset = m.rebind_to(flat, offset)
        return flat

    # ------------------------------------------------------------------
    # forward paths
    # ------------------------------------------------------------------

    @property
    def alpha(self) -> float:
        return float(np.exp(self.params.log_alpha[0]))

    def _actor_heads(self, obs):
        out, cache = self.params.actor.forward(obs)
        out2d = np.atleast_2d(out)
        mu = out2d[:, :2]
        raw = out2d[:, 2:]
        log_std = np.clip(raw, self.config.log_std_min, self.config.log_std_max)
        clip_mask = (raw > self.config.log_std_min) & (raw < self.config.log_std_max)
        return mu, log_std, clip_mask, cache

    def actor_sample(self, obs, rng: np.random.Generator | None = None,
                     eps: np.ndarray | None = None):
        """Squashed-Gaussian sample and its log-density.

        Returns ``(actions, log_probs, sample_cache)``; pass ``eps`` to fix
        the reparametrization noise (used by the gradient checks).
        """
        single = np.asarray(obs).ndim == 1
        mu, log_std, clip_mask, net_cache = self._actor_heads(obs)
        if eps is None:
            eps = (rng or self._rng).standard_normal(mu.shape)
        std = np.exp(log_std)
        u = mu + std * eps
        tanh_u = np.tanh(u)
        actions = tanh_u * self.bounds
        logp = np.sum(-0.5 * eps ** 2 - log_std - 0.5 * _LOG_2PI
                      - np.log(self.bounds) + 2.0 * log_cosh(u), axis=1)
        cache = {"eps": eps, "std": std, "tanh_u": tanh_u,
                 "clip_mask": clip_mask, "net_cache": net_cache}
        if single:
            return actions[0], float(logp[0]), cache
        return actions, logp, cache

    def mean_action(self, obs) -> np.ndarray:
        """Deterministic evaluation action (tanh of the mean head)."""
        mu, _, _, _ = self._actor_heads(obs)
        out = np.tanh(mu) * self.bounds
        return out[0] if np.asarray(obs).ndim == 1 else out

    def act(self, obs, deterministic: bool = False) -> Action:
        if deterministic:
            a = self.mean_action(obs)
        else:
            a, _, _ = self.actor_sample(obs, self._rng)
        return Action(float(a[0]), float(a[1]))

    def log_prob(self, obs, actions) -> np.ndarray:
        """Density of given actions under the current policy (no sampling)."""
        single = np.asarray(obs).ndim == 1
        mu, log_std, _, _ = self._actor_heads(obs)
        a = np.atleast_2d(np.asarray(actions, dtype=float))
        ratio = np.clip(a / self.bounds, -1 + 1e-12, 1 - 1e-12)
        u = np.arctanh(ratio)
        std = np.exp(log_std)
        z = (u - mu) / std
        logp = np.sum(-0.5 * z ** 2 - log_std - 0.5 * _LOG_2PI
                      - np.log(self.bounds) + 2.0 * log_cosh(u), axis=1)
        return float(logp[0]) if single else logp

    def ae_encode(self, obs) -> np.ndarray:
        return self.params.encoder.forward(obs)[0]

    def ae_decode(self, latent) -> np.ndarray:
        return self.params.decoder.forward(latent)[0]

    def embed_action(self, action) -> np.ndarray:
        a = action if isinstance(action, np.ndarray) else np.array([action.delta, action.v])
        return self.params.embed.forward(a)[0]

    def critic_q(self, z_q, z_a, which: int = 1) -> np.ndarray | float:
        critic = self.params.critic1 if which == 1 else self.params.critic2
        z = np.concatenate([z_q, z_a], axis=-1)
        q, _ = critic.forward(z)
        return float(q[0]) if np.asarray(z).ndim == 1 else q[:, 0]

    def critic_value_and_bound(self, z_q, z_a, which: int = 1):
        """Q value plus its layer-norm bound ||w||*||hhat|| + |b|."""
        critic = self.params.critic1 if which == 1 else self.params.critic2
        z = np.concatenate([np.atleast_2d(z_q), np.atleast_2d(z_a)], axis=1)
        q, cache = critic.forward(z)
        hhat = cache[0][-1]  # input to the final linear layer
        w = critic.weights[-1][:, 0]
        b = critic.biases[-1][0]
        bound = np.linalg.norm(w) * np.linalg.norm(hhat, axis=1) + abs(b)
        return q[:, 0], bound

    # ------------------------------------------------------------------
    # losses (shared by update() and by the finite-difference checks)
    # ------------------------------------------------------------------

    def compute_target(self, batch: list[Transition], rng: np.random.Generator | None = None):
        """Entropy-regularized one-step targets for a batch."""
        s2 = np.stack([t.next_obs for t in batch])
        r = np.array([t.reward for t in batch])
        d = np.array([float(t.done) for t in batch])
        a2, logp2, _ = self.actor_sample(s2, rng or self._rng)
        z_q2 = self.ae_encode(s2)
        z_a2 = self.params.embed.forward(a2)[0]
        z = np.concatenate([z_q2, z_a2], axis=1)
        q1 = self.params.target1.forward(z)[0][:, 0]
        q2 = self.params.target2.forward(z)[0][:, 0]
        qmin = np.minimum(q1, q2)
        return r + self.config.gamma * (1.0 - d) * (qmin - self.alpha * logp2)

    def critic_loss_and_grads(self, s, a, y):
        """Twin-critic regression; also returns embed/encoder gradients."""
        p = self.params
        z_q, enc_cache = p.encoder.forward(s)
        z_a, emb_cache = p.embed.forward(a)
        z = np.concatenate([z_q, z_a], axis=1)
        B = len(s)
        losses = []
        grads = {}
        dz_a_total = np.zeros_like(z_a)
        dz_q_total = np.zeros_like(z_q)
        for which, critic in (("critic1", p.critic1), ("critic2", p.critic2)):
            q, cache = critic.forward(z)
            err = q[:, 0] - y
            losses.append(float(np.mean(err ** 2)))
            dq = (2.0 * err / B)[:, None]
            g, dz = critic.backward(cache, dq)
            grads[which] = g
            dz_q_total += dz[:, :z_q.shape[1]]
            dz_a_total += dz[:, z_q.shape[1]:]
        grads["embed"], _ = p.embed.backward(emb_cache, dz_a_total)
        if self.config.train_encoder_from_critic:
            grads["encoder"], _ = p.encoder.backward(enc_cache, dz_q_total)
        return losses[0], losses[1], grads

    def actor_loss_and_grads(self, s, eps: np.ndarray | None = None):
        """Reparametrized actor objective; gradient w.r.t. actor params only."""
        p = self.params
        B = len(s)
        actions, logp, cache = self.actor_sample(s, self._rng, eps=eps)
        z_q = self.ae_encode(s)
        z_a, emb_cache = p.embed.forward(actions)
        z = np.concatenate([z_q, z_a], axis=1)
        q1, c1 = p.critic1.forward(z)
        q2, c2 = p.critic2.forward(z)
        q1, q2 = q1[:, 0], q2[:, 0]
        pick1 = q1 <= q2
        qmin = np.where(pick1, q1, q2)
        alpha = self.alpha
        loss = float(np.mean(alpha * logp - qmin))

        # dJ/dqmin = -1/B, routed to the argmin critic, then through the
        # (frozen) critic and embedder down to the sampled actions
        dq = (-1.0 / B)
        dq1 = np.where(pick1, dq, 0.0)[:, None]
        dq2 = np.where(pick1, 0.0, dq)[:, None]
        _, dz1 = p.critic1.backward(c1, dq1)
        _, dz2 = p.critic2.backward(c2, dq2)
        dz_a = (dz1 + dz2)[:, z_q.shape[1]:]
        _, da = p.embed.backward(emb_cache, dz_a)

        # analytic pieces of d logp and da/d(mu, log_std)
        eps_used = cache["eps"]
        std = cache["std"]
        tanh_u = cache["tanh_u"]
        sech2 = 1.0 - tanh_u ** 2
        dlogp_dmu = 2.0 * tanh_u
        dlogp_dls = -1.0 + 2.0 * tanh_u * std * eps_used
        da_dmu = self.bounds * sech2
        da_dls = self.bounds * sech2 * std * eps_used
        dmu = (alpha / B) * dlogp_dmu + da * da_dmu
        dls = ((alpha / B) * dlogp_dls + da * da_dls) * cache["clip_mask"]
        dout = np.concatenate([dmu, dls], axis=1)
        grads, _ = p.actor.backward(cache["net_cache"], dout)
        return loss, grads, logp

    def ae_loss_and_grads(self, s):
        """Batch mean of per-sample L1 reconstruction norms."""
        p = self.params
        z, enc_cache = p.encoder.forward(s)
        recon, dec_cache = p.decoder.forward(z)
        diff = s - recon
        loss = float(np.mean(np.sum(np.abs(diff), axis=1)))
        B = len(s)
        drecon = -np.sign(diff) / B
        dec_grads, dz = p.decoder.backward(dec_cache, drecon)
        enc_grads, _ = p.encoder.backward(enc_cache, dz)
        return loss, {"encoder": enc_grads, "decoder": dec_grads}

    def alpha_loss_and_grad(self, logp: np.ndarray):
        """Log-temperature objective; ``logp`` is treated as a constant."""
        drive = float(np.mean(logp + self.config.target_entropy))
        alpha = self.alpha
        loss = -alpha * drive
        # d/d(log_alpha) of -exp(log_alpha) * drive
        return loss, np.array([-alpha * drive])

    # ------------------------------------------------------------------
    # update
    # ------------------------------------------------------------------

    def update(self, batch: list[Transition]) -> dict:
        """One optimization step per loss group plus a target soft update.

        Aborts (applying nothing) when any loss turns non-finite.
        """
        cfg = self.config
        p = self.params
        s = np.stack([t.obs for t in batch])
        a = np.stack([[t.action.delta, t.action.v] for t in batch])

        y = self.compute_target(batch)
        j_q1, j_q2, critic_grads = self.critic_loss_and_grads(s, a, y)
        report = {"j_q1": j_q1, "j_q2": j_q2, "alpha": self.alpha, "aborted": False}
        if not math.isfinite(j_q1 + j_q2):
            report["aborted"] = True
            return report
        flatten_grads(critic_grads["critic1"] + critic_grads["critic2"]
                      + critic_grads["embed"], self._critic_gflat)
        group = [self._critic_gflat]
        if cfg.train_encoder_from_critic:
            group += critic_grads["encoder"]
        self.opt_critic.step(group)

        j_pi, actor_grads, logp = self.actor_loss_and_grads(s)
        report["j_pi"] = j_pi
        if not math.isfinite(j_pi):
            report["aborted"] = True
            return report
        self.opt_actor.step([flatten_grads(actor_grads, self._actor_gflat)])

        j_ae, ae_grads = self.ae_loss_and_grads(s)
        report["j_ae"] = j_ae
        if not math.isfinite(j_ae):
            report["aborted"] = True
            return report
        flatten_grads(ae_grads["encoder"] + ae_grads["decoder"], self._ae_gflat)
        if cfg.lambda_ae != 1.0:
            self._ae_gflat *= cfg.lambda_ae
        self.opt_ae.step([self._ae_gflat])

        j_alpha, dalpha = self.alpha_loss_and_grad(logp)
        report["j_alpha"] = j_alpha
        self.opt_alpha.step([dalpha])
        report["alpha"] = self.alpha

        self._polyak()
        self.updates_done += 1
        return report

    def _polyak(self) -> None:
        tau = self.config.tau
        for dst, src in ((self.params.target1, self.params.critic1),
                         (self.params.target2, self.params.critic2)):
            for t, c in zip(dst.params(), src.params()):
                t += tau * (c - t)
