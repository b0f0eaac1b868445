"""Weight export and parity fixtures.

Writes the "CWTS" container the codec loads (little-endian: magic,
version u32, config block, sorted entry table of name/shape records,
float32 payload, crc32 trailer) and a fixture bundle of named input and
expected-output tensors with a JSON tolerance manifest.  Fixtures are
generated from the exact exported weights in eval mode.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from .config import ModelSpec
from .model import CodecModel

FORMAT_VERSION = 1
MAGIC = b"CWTS"
RTOL = 1e-4
ATOL = 1e-5


class ExportError(RuntimeError):
    pass


def required_names(spec: ModelSpec) -> set[str]:
    """Entry names the codec's manifest demands; must stay in lockstep."""
    names = set()
    for i in range(4):
        names |= {f"analysis.{i}.weight", f"analysis.{i}.bias",
                  f"synthesis.{i}.weight", f"synthesis.{i}.bias"}
    for i in range(3):
        names |= {f"hyper_enc.{i}.weight", f"hyper_enc.{i}.bias",
                  f"hyper_dec.{i}.weight", f"hyper_dec.{i}.bias"}
    names |= {"fusion.in.weight", "fusion.in.bias"}
    for r in range(2):
        for j in range(2):
            names |= {f"fusion.res{r}.conv{j}.weight",
                      f"fusion.res{r}.conv{j}.bias"}
    names |= {"first_view.embedding", "const_token",
              "proj.weight", "proj.bias",
              "embed.estimated", "embed.content",
              "epm.0.weight", "epm.0.bias", "epm.1.weight", "epm.1.bias",
              "epm.2.weight", "epm.2.bias", "hyper_scales"}
    for i in range(spec.num_blocks):
        p = f"blocks.{i}"
        names |= {f"{p}.attn.qkv.weight", f"{p}.attn.qkv.bias",
                  f"{p}.attn.out.weight", f"{p}.attn.out.bias",
                  f"{p}.attn.rel_bias",
                  f"{p}.ln1.gain", f"{p}.ln1.bias",
                  f"{p}.mlp.fc1.weight", f"{p}.mlp.fc1.bias",
                  f"{p}.mlp.fc2.weight", f"{p}.mlp.fc2.bias",
                  f"{p}.ln2.gain", f"{p}.ln2.bias"}
    return names


def verify_complete(entries: dict[str, np.ndarray], spec: ModelSpec) -> None:
    required = required_names(spec)
    missing = required - set(entries)
    if missing:
        raise ExportError(f"export misses manifest entries: {sorted(missing)}")
    extra = set(entries) - required
    if extra:
        raise ExportError(f"export has unknown entries: {sorted(extra)}")


def export_entries(model: CodecModel) -> dict[str, np.ndarray]:
    """Flat name -> float32 array map in the codec's naming scheme."""
    out: dict[str, np.ndarray] = {}

    def put(name: str, tensor: torch.Tensor) -> None:
        out[name] = tensor.detach().cpu().numpy().astype(np.float32)

    for group, prefix in ((model.analysis_convs, "analysis"),
                          (model.synthesis_convs, "synthesis"),
                          (model.hyper_enc_convs, "hyper_enc"),
                          (model.hyper_dec_convs, "hyper_dec")):
        for i, conv in enumerate(group):
            put(f"{prefix}.{i}.weight", conv.weight)
            put(f"{prefix}.{i}.bias", conv.bias)
    put("fusion.in.weight", model.fusion_in.weight)
    put("fusion.in.bias", model.fusion_in.bias)
    for r, pair in enumerate(model.fusion_res):
        for j, conv in enumerate(pair):
            put(f"fusion.res{r}.conv{j}.weight", conv.weight)
            put(f"fusion.res{r}.conv{j}.bias", conv.bias)
    put("first_view.embedding", model.first_view)
    put("const_token", model.const_token)
    put("proj.weight", model.proj.weight)
    put("proj.bias", model.proj.bias)
    put("embed.estimated", model.embed_estimated)
    put("embed.content", model.embed_content)
    for i, block in enumerate(model.blocks):
        p = f"blocks.{i}"
        put(f"{p}.attn.qkv.weight", block.attn.qkv.weight)
        put(f"{p}.attn.qkv.bias", block.attn.qkv.bias)
        put(f"{p}.attn.out.weight", block.attn.out.weight)
        put(f"{p}.attn.out.bias", block.attn.out.bias)
        put(f"{p}.attn.rel_bias", block.attn.rel_bias)
        put(f"{p}.ln1.gain", block.ln1.weight)
        put(f"{p}.ln1.bias", block.ln1.bias)
        put(f"{p}.mlp.fc1.weight", block.fc1.weight)
        put(f"{p}.mlp.fc1.bias", block.fc1.bias)
        put(f"{p}.mlp.fc2.weight", block.fc2.weight)
        put(f"{p}.mlp.fc2.bias", block.fc2.bias)
        put(f"{p}.ln2.gain", block.ln2.weight)
        put(f"{p}.ln2.bias", block.ln2.bias)
    put("epm.0.weight", model.epm0.weight)
    put("epm.0.bias", model.epm0.bias)
    put("epm.1.weight", model.epm1.weight)
    put("epm.1.bias", model.epm1.bias)
    put("epm.2.weight", model.epm2.weight)
    put("epm.2.bias", model.epm2.bias)
    put("hyper_scales", torch.exp(model.log_hyper_scales))

    verify_complete(out, model.spec)
    return out


def serialize_weights(entries: dict[str, np.ndarray], spec: ModelSpec) -> bytes:
    body = bytearray()
    body += spec.to_bytes()
    names = sorted(entries)
    body += struct.pack("<I", len(names))
    payload = bytearray()
    for name in names:
        arr = np.ascontiguousarray(entries[name], dtype="<f4")
        nb = name.encode("utf-8")
        body += struct.pack("<H", len(nb)) + nb
        body += struct.pack("<B", arr.ndim)
        if arr.ndim:
            body += struct.pack(f"<{arr.ndim}I", *arr.shape)
        payload += arr.tobytes()
    body += payload
    crc = zlib.crc32(bytes(body)) & 0xFFFFFFFF
    return MAGIC + struct.pack("<I", FORMAT_VERSION) + bytes(body) \
        + struct.pack("<I", crc)


def write_weights(model: CodecModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(serialize_weights(export_entries(model), model.spec))
    return path


def write_fixtures(model: CodecModel, out_dir: str | Path,
                   weights_name: str = "../desk_weights.cwts",
                   seed: int = 7) -> Path:
    """Named input/expected-output tensors for every forward the codec
    reimplements, produced by this model in eval mode."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = model.spec
    d, t = spec.latent_dim, spec.transformer_dim
    gen = torch.Generator().manual_seed(seed)
    model.eval()
    cases = []

    def save(name: str, arr: torch.Tensor) -> str:
        fname = f"{name}.npy"
        np.save(out / fname, arr.detach().cpu().numpy())
        return fname

    def case(kind: str, inputs: dict, outputs: dict, **meta):
        cases.append({"kind": kind, "inputs": inputs, "outputs": outputs,
                      **meta})

    with torch.no_grad():
        img = torch.rand((1, 3, 32, 48), generator=gen)
        grid = model.analysis(img)
        case("analysis", {"image": save("analysis.image", img[0])},
             {"grid": save("analysis.grid", grid[0])})

        lat = torch.randint(-10, 11, (1, 2, 3, d), generator=gen).float()
        recon = model.synthesis(lat, clip=True)
        case("synthesis", {"grid": save("synthesis.grid", lat[0])},
             {"image": save("synthesis.image", recon[0])})

        y = 2.0 * torch.randn((1, 3, 4, d), generator=gen)
        hf = model.hyper_features(y)
        case("hyper_features", {"grid": save("hyper_features.grid", y[0])},
             {"chw": save("hyper_features.chw", hf[0])})

        z = torch.randint(-12, 13, (1, spec.hyper_dim, 1, 1), generator=gen)
        hd = model.hyper_decode(z.float(), 3, 4)
        case("hyper_decode",
             {"z": save("hyper_decode.z", z[0].to(torch.int32))},
             {"grid": save("hyper_decode.grid", hd[0])}, h=3, w=4)

        a = torch.randn((1, 3, 4, d), generator=gen)
        b = torch.randn((1, 3, 4, d), generator=gen)
        fused = model.fuse(a, b)
        case("fuse", {"hyper": save("fuse.hyper", a[0]),
                      "disparity": save("fuse.disparity", b[0])},
             {"content": save("fuse.content", fused[0])})

        ctx = torch.randn((1, 3, 4, d), generator=gen)
        case("project", {"context": save("project.context", ctx[0])},
             {"tokens": save("project.tokens", model.project(ctx)[0])})

        for idx in range(spec.num_blocks):
            tok = torch.randn((1, 5, 6, t), generator=gen)
            res = model.swin_block(tok, idx)
            case("swin_block",
                 {"tokens": save(f"swin_block{idx}.tokens", tok[0])},
                 {"tokens": save(f"swin_block{idx}.out", res[0])}, index=idx)

        tok = torch.randn((1, 3, 4, t), generator=gen)
        mu, sg = model.entropy_params(tok)
        case("entropy_params",
             {"tokens": save("entropy_params.tokens", tok[0])},
             {"mu": save("entropy_params.mu", mu[0]),
              "sigma": save("entropy_params.sigma", sg[0])})

        for tag, (h, w) in (("wide", (5, 6)), ("tiny", (1, 1))):
            ctx = torch.randn((1, h, w, d), generator=gen)
            mask = torch.rand((1, h, w), generator=gen) < 0.5
            mu, sg = model.model_forward(ctx, mask)
            case("model_forward",
                 {"context": save(f"model_forward.{tag}.context", ctx[0]),
                  "mask": save(f"model_forward.{tag}.mask", mask[0])},
                 {"mu": save(f"model_forward.{tag}.mu", mu[0]),
                  "sigma": save(f"model_forward.{tag}.sigma", sg[0])})

    manifest = {"weights": weights_name,
                "tolerances": {"rtol": RTOL, "atol": ATOL},
                "cases": cases}
    with open(out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=1)
    return out
