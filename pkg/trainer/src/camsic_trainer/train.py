"""Rate-distortion training loop.

Per view the rate term follows the two-step decomposition: the sampled
visible set is costed under the content-only context, the complement
under the composite context, and the hyper-latent under its factorized
model; the distortion term is MSE on the straight-through reconstruction.
View 2 conditions on view 1's rounded latents as disparity prior.
"""

from __future__ import annotations

import torch

from .config import TrainConfig
from .data import stereo_batch
from .masks import sample_mask
from .model import CodecModel, discretized_gaussian_bits
from .quantize import mixed_quantize


def view_rate_terms(model: CodecModel, y_cont: torch.Tensor,
                    disparity: torch.Tensor, mask: torch.Tensor,
                    generator: torch.Generator | None, training: bool,
                    constant_mode: bool):
    """Rate pieces plus the rounded latents for one view.

    Returns (r_c, r_u, r_z, y_ste) with rates in total bits over the batch.
    """
    spec = model.spec
    b, h, w, _ = y_cont.shape
    y_rate, y_ste = mixed_quantize(y_cont, training, generator)
    z_cont = model.hyper_features(y_cont)
    z_rate, z_ste = mixed_quantize(z_cont, training, generator)

    hyper_feat = model.hyper_decode(z_ste, h, w)
    if constant_mode:
        content = model.const_field(b, h, w)
    else:
        content = model.fuse(hyper_feat, disparity)

    mu_c, sg_c = model.model_forward(content, torch.zeros(b, h, w, dtype=torch.bool))
    bits_c = discretized_gaussian_bits(y_rate, mu_c, sg_c, spec)
    r_c = (bits_c * mask[..., None]).sum()

    composite = torch.where(mask[..., None], y_rate, content)
    mu_u, sg_u = model.model_forward(composite, mask)
    bits_u = discretized_gaussian_bits(y_rate, mu_u, sg_u, spec)
    r_u = (bits_u * (~mask)[..., None]).sum()

    sig_z = model.hyper_sigma()[None, :, None, None]
    r_z = discretized_gaussian_bits(z_rate, torch.zeros(()), sig_z, spec).sum()
    return r_c, r_u, r_z, y_ste


def pair_loss(model: CodecModel, cfg: TrainConfig, left: torch.Tensor,
              right: torch.Tensor, generator: torch.Generator | None,
              training: bool = True, constant_mode: bool = False) -> dict:
    """Weighted pair objective; all rates normalized to bits per pixel."""
    b, _, hi, wi = left.shape
    view_bits = []
    mse = []
    disparity = None
    y_prev = None
    for img in (left, right):
        y_cont = model.analysis(img)
        bb, h, w, _ = y_cont.shape
        if disparity is None:
            disparity = model.first_view_field(bb, h, w)
        masks = torch.stack([sample_mask(h * w, generator).view(h, w)
                             for _ in range(bb)])
        r_c, r_u, r_z, y_ste = view_rate_terms(
            model, y_cont, disparity, masks, generator, training,
            constant_mode)
        recon = model.synthesis(y_ste, clip=not training)
        mse.append(((recon - img) ** 2).mean())
        view_bits.append(r_c + r_u + r_z)
        disparity = y_ste
        y_prev = y_ste
    bpp = (view_bits[0] + view_bits[1]) / (b * 2.0 * hi * wi)
    distortion = mse[0] + mse[1]
    loss = cfg.lam * distortion + bpp
    return {"loss": loss, "bpp": bpp, "mse": distortion,
            "view_bits": view_bits, "latents": y_prev}


class Trainer:
    def __init__(self, cfg: TrainConfig, model: CodecModel | None = None):
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        self.generator = torch.Generator().manual_seed(cfg.seed)
        self.model = model if model is not None else CodecModel(cfg.spec)
        self.opt = torch.optim.Adam(self.model.parameters(), lr=cfg.lr)
        self.history: list[dict] = []

    def step(self, batch: tuple[torch.Tensor, torch.Tensor] | None = None) -> dict:
        cfg = self.cfg
        if batch is None:
            batch = stereo_batch(cfg, self.generator)
        constant = bool(torch.rand((), generator=self.generator)
                        < cfg.constant_prob)
        out = pair_loss(self.model, cfg, batch[0], batch[1], self.generator,
                        training=True, constant_mode=constant)
        loss = out["loss"]
        if not torch.isfinite(loss):
            raise RuntimeError(
                f"training diverged at step {len(self.history)}: "
                f"loss={float(loss.detach())}, "
                f"bpp={float(out['bpp'].detach())}, "
                f"mse={float(out['mse'].detach())}")
        self.opt.zero_grad()
        loss.backward()
        self.opt.step()
        rec = {"loss": float(loss.detach()), "bpp": float(out["bpp"].detach()),
               "mse": float(out["mse"].detach()),
               "bits_v1": float(out["view_bits"][0].detach()),
               "bits_v2": float(out["view_bits"][1].detach())}
        self.history.append(rec)
        return rec

    def fit(self, steps: int | None = None,
            fixed_batch: tuple[torch.Tensor, torch.Tensor] | None = None,
            log_every: int = 0) -> list[dict]:
        n = steps if steps is not None else self.cfg.steps
        for i in range(n):
            rec = self.step(fixed_batch)
            if log_every and (i + 1) % log_every == 0:
                print(f"step {i + 1:5d}  loss {rec['loss']:.4f}  "
                      f"bpp {rec['bpp']:.4f}  mse {rec['mse']:.6f}")
        return self.history
