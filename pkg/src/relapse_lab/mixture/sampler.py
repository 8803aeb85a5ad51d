"""MCMC for the skew-Student mixture: Gibbs sweeps with adaptive Metropolis.

Latent variables (noise precisions, true log values, skew and tail latents,
assignments, weights) have closed-form conditionals and are drawn by Gibbs.
Component parameters, dofs, and the censoring pair move by elementwise
random-walk Metropolis whose conditional targets factorize over (component,
dimension) cells, so all cells propose and accept in parallel.  Step sizes
adapt toward the target acceptance rate during burn-in only, leaving the
post-burn-in kernel fixed.

Patients are processed in sorted-id order throughout, which makes every
chain bit-identical under permutation of the input cohort.
"""

from __future__ import annotations

import numpy as np
from scipy import special

from ..cohort import Cohort
from ..errors import InitializationError, SchemaMismatchError
from .._util import derive_rng, sample_truncated_normal_above
from .density import canonical_training_arrays, joint_log_density
from .params import ChainConfig, HyperParams, MixtureSample

__all__ = ["run_mcmc"]


def _initial_state(hyper: HyperParams, values: np.ndarray, censored: np.ndarray, rng):
    k, d = hyper.n_components, hyper.n_dims
    n = values.shape[0]
    # spread component locations over prior quantiles; jitter is not needed
    # because assignments start random
    spread = special.ndtri((np.arange(k) + 1.0) / (k + 1.0))
    state = {
        "w": np.full(k, 1.0 / k),
        "xi": hyper.location_centers[None, :] + hyper.location_scales[None, :] * spread[:, None],
        "sigma": np.tile(np.sqrt(hyper.scale_rates), (k, 1)),
        "delta": np.zeros((k, d)),
        "nu": np.full(k, hyper.fixed_dof if hyper.fixed_dof is not None else 10.0),
        "mu_c": hyper.censor_center,
        "sigma_c": 1.0,
        "z": values.copy(),
        "u": np.full(n, 0.5),
        "g": np.ones(n),
        "c": rng.integers(0, k, size=n),
    }
    state["z"][censored, -1] += 0.5  # start latent relapse above the censor time
    return state


def _snapshot(state) -> MixtureSample:
    return MixtureSample(
        state["w"].copy(),
        state["xi"].copy(),
        state["sigma"].copy(),
        state["delta"].copy(),
        state["nu"].copy(),
        float(state["mu_c"]),
        float(state["sigma_c"]),
        assignments=state["c"].copy(),
        skew_latents=state["u"].copy(),
        tail_latents=state["g"].copy(),
        log_values=state["z"].copy(),
    )


def run_mcmc(train: Cohort, hyper: HyperParams, config: ChainConfig) -> list[MixtureSample]:
    """Draw posterior samples for the mixture model on a training cohort.

    Returns ``config.samples`` kept samples taken every ``config.thin``
    sweeps after ``config.burn_in`` warm-up sweeps.  Kept samples carry the
    latent states; their per-patient vectors follow patients sorted by id.
    """
    if len(train) == 0:
        raise InitializationError("cannot run MCMC on an empty cohort")
    if tuple(hyper.schema) != tuple(train.schema):
        raise SchemaMismatchError(
            f"hyperparameters cover schema {hyper.schema}, cohort has {train.schema}"
        )
    n = len(train)
    k, d = hyper.n_components, hyper.n_dims
    _, values, log_times, relapsed = canonical_training_arrays(train)
    censored = ~relapsed
    n_cens = int(censored.sum())
    observed = np.ones((n, d))
    observed[censored, -1] = 0.0
    lt_cens = log_times[censored]
    lt_rel = log_times[relapsed]

    rng = derive_rng(config.seed, "mixture-chain")
    state = _initial_state(hyper, values, censored, rng)
    start = joint_log_density(_snapshot(state), hyper, train)
    if not np.isfinite(start):
        raise InitializationError(f"log posterior at the initial state is {start}")

    alpha_k = hyper.concentration / k
    a0 = hyper.scale_shape
    b = hyper.scale_rates
    m = hyper.location_centers
    s = hyper.location_scales
    s_noise2 = hyper.noise_scale**2
    lam_shape = (hyper.noise_dof + 1.0) / 2.0
    target = config.target_acceptance
    move_delta = not hyper.fix_delta_zero
    move_nu = hyper.fixed_dof is None

    ls_xi = np.full((k, d), np.log(0.1))
    ls_delta = np.full((k, d), np.log(0.1))
    ls_sigma = np.full((k, d), np.log(0.1))
    ls_nu = np.full(k, np.log(0.3))
    ls_cens = np.log(0.2)

    def censor_loglik(mu, sc):
        ll = 0.0
        if n_cens:
            ll += float(np.sum(-np.log(sc) - 0.5 * ((lt_cens - mu) / sc) ** 2))
        if lt_rel.size:
            ll += float(np.sum(special.log_ndtr((mu - lt_rel) / sc)))
        return ll

    kept: list[MixtureSample] = []
    for sweep in range(config.total_sweeps):
        w, xi, sigma = state["w"], state["xi"], state["sigma"]
        delta, nu = state["delta"], state["nu"]
        z, u, g, c = state["z"], state["u"], state["g"], state["c"]
        adapting = sweep < config.burn_in
        gain = (sweep + 1.0) ** -0.6 if adapting else 0.0

        # noise precisions: Student noise as a scale mixture of normals
        resid_obs = values - z
        lam_rate = (hyper.noise_dof + resid_obs * resid_obs / s_noise2) / 2.0
        lam = rng.standard_gamma(lam_shape, size=(n, d)) / lam_rate
        noise_prec = observed * lam / s_noise2

        # latent true log values, cell by cell
        prior_mean = xi[c] + delta[c] * u[:, None]
        prior_prec = g[:, None] / sigma[c] ** 2
        post_prec = prior_prec + noise_prec
        post_mean = (prior_prec * prior_mean + noise_prec * values) / post_prec
        post_sd = 1.0 / np.sqrt(post_prec)
        z = post_mean + post_sd * rng.standard_normal((n, d))
        if n_cens:
            z[censored, -1] = sample_truncated_normal_above(
                rng.uniform(size=n_cens),
                post_mean[censored, -1],
                post_sd[censored, -1],
                lt_cens,
            )

        # skew latents: truncated-normal conditional
        d_over_s2 = delta[c] / sigma[c] ** 2
        tau = g * (1.0 + np.sum(delta[c] * d_over_s2, axis=1))
        mean_u = g * np.sum(d_over_s2 * (z - xi[c]), axis=1) / tau
        u = sample_truncated_normal_above(rng.uniform(size=n), mean_u, 1.0 / np.sqrt(tau), 0.0)

        # tail latents: exact gamma conditional
        resid = z - xi[c] - delta[c] * u[:, None]
        shape_g = (nu[c] + d + 1.0) / 2.0
        rate_g = nu[c] / 2.0 + 0.5 * u * u + 0.5 * np.sum(resid * resid / sigma[c] ** 2, axis=1)
        g = rng.standard_gamma(shape_g) / rate_g

        # assignments: Gumbel-max over per-component log scores
        log_w = np.log(np.maximum(w, 1e-300))
        dz = z[:, None, :] - xi[None, :, :] - delta[None, :, :] * u[:, None, None]
        quad = np.sum(dz * dz / sigma[None, :, :] ** 2, axis=2)
        half = nu / 2.0
        scores = (
            log_w[None, :]
            - np.sum(np.log(sigma), axis=1)[None, :]
            - 0.5 * g[:, None] * quad
            + (half * np.log(half) - special.gammaln(half))[None, :]
            + (half[None, :] - 1.0) * np.log(g)[:, None]
            - half[None, :] * g[:, None]
        )
        c = np.argmax(scores + rng.gumbel(size=(n, k)), axis=1)

        # weights: conjugate Dirichlet
        counts = np.bincount(c, minlength=k)
        w = rng.dirichlet(alpha_k + counts)

        # sufficient statistics for the Metropolis blocks
        onehot = (c[:, None] == np.arange(k)[None, :]).astype(float)
        nk = counts.astype(float)
        sg = onehot.T @ g
        sgu = onehot.T @ (g * u)
        sgu2 = onehot.T @ (g * u * u)
        gz = g[:, None] * z
        sgz = onehot.T @ gz
        sgzu = onehot.T @ (u[:, None] * gz)
        sgz2 = onehot.T @ (gz * z)
        slg = onehot.T @ np.log(g)

        def qform(xi_, delta_):
            return (
                sgz2
                - 2.0 * xi_ * sgz
                - 2.0 * delta_ * sgzu
                + xi_ * xi_ * sg[:, None]
                + 2.0 * xi_ * delta_ * sgu[:, None]
                + delta_ * delta_ * sgu2[:, None]
            )

        cur_q = qform(xi, delta)

        # locations
        prop = xi + np.exp(ls_xi) * rng.standard_normal((k, d))
        prop_q = qform(prop, delta)
        gap = (cur_q - prop_q) / (2.0 * sigma**2)
        gap += ((xi - m) ** 2 - (prop - m) ** 2) / (2.0 * s**2)
        acc = np.log(rng.uniform(size=(k, d))) < gap
        xi = np.where(acc, prop, xi)
        cur_q = np.where(acc, prop_q, cur_q)
        ls_xi += gain * (acc - target)

        # skews
        if move_delta:
            prop = delta + np.exp(ls_delta) * rng.standard_normal((k, d))
            prop_q = qform(xi, prop)
            gap = (cur_q - prop_q) / (2.0 * sigma**2)
            gap += (delta**2 - prop**2) / (2.0 * s**2)
            acc = np.log(rng.uniform(size=(k, d))) < gap
            delta = np.where(acc, prop, delta)
            cur_q = np.where(acc, prop_q, cur_q)
            ls_delta += gain * (acc - target)

        # scales, random walk on log sigma; the inverse-gamma prior on
        # sigma^2 plus the log-scale Jacobian gives the -2 a0 theta term
        theta = np.log(sigma)
        prop_t = theta + np.exp(ls_sigma) * rng.standard_normal((k, d))
        prop_s = np.exp(prop_t)
        inv_gap = 1.0 / prop_s**2 - 1.0 / sigma**2
        gap = -nk[:, None] * (prop_t - theta) - 0.5 * cur_q * inv_gap
        gap += -2.0 * a0 * (prop_t - theta) - b[None, :] * inv_gap
        acc = np.log(rng.uniform(size=(k, d))) < gap
        sigma = np.where(acc, prop_s, sigma)
        ls_sigma += gain * (acc - target)

        # dofs, random walk on log(nu - 2)
        if move_nu:
            def nu_loglik(nv):
                h = nv / 2.0
                return nk * (h * np.log(h) - special.gammaln(h)) + (h - 1.0) * slg - h * sg

            phi = np.log(nu - 2.0)
            prop_phi = phi + np.exp(ls_nu) * rng.standard_normal(k)
            prop_nu = 2.0 + np.exp(prop_phi)
            gap = nu_loglik(prop_nu) - nu_loglik(nu)
            gap += -hyper.dof_rate * (prop_nu - nu) + (prop_phi - phi)
            acc = np.log(rng.uniform(size=k)) < gap
            nu = np.where(acc, prop_nu, nu)
            ls_nu += gain * (acc - target)

        # censoring pair, joint walk with sigma_c on the log scale
        mu_c, sigma_c = state["mu_c"], state["sigma_c"]
        step = np.exp(ls_cens) * rng.standard_normal(2)
        prop_mu = mu_c + step[0]
        prop_tc = np.log(sigma_c) + step[1]
        prop_sc = float(np.exp(prop_tc))
        gap = censor_loglik(prop_mu, prop_sc) - censor_loglik(mu_c, sigma_c)
        gap += ((mu_c - hyper.censor_center) ** 2 - (prop_mu - hyper.censor_center) ** 2) / (
            2.0 * hyper.censor_location_sd**2
        )
        gap += (sigma_c**2 - prop_sc**2) / (2.0 * hyper.censor_scale_sd**2)
        gap += prop_tc - np.log(sigma_c)
        acc_c = np.log(rng.uniform()) < gap
        if acc_c:
            mu_c, sigma_c = float(prop_mu), prop_sc
        ls_cens += gain * (float(acc_c) - target)

        state.update(
            w=w, xi=xi, sigma=sigma, delta=delta, nu=nu,
            mu_c=mu_c, sigma_c=sigma_c, z=z, u=u, g=g, c=c,
        )
        if sweep >= config.burn_in and (sweep - config.burn_in) % config.thin == config.thin - 1:
            kept.append(_snapshot(state))
    return kept
