"""Binary model checkpoints ('RSVQ'): config, standardizer, weights, history.

Everything is little-endian and written in a fixed order so that reruns of a
seeded pipeline produce byte-identical files.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from ..dsp import DspConfig, Standardizer
from ..errors import DataError
from .layers import LayerSpec
from .train import EpochRecord, History, TrainConfig
from .vae import Architecture, Vae

MAGIC = b"RSVQ"
VERSION = 1


def _w_str(fh, s: str) -> None:
    raw = s.encode("utf-8")
    fh.write(struct.pack("<I", len(raw)))
    fh.write(raw)


def _r_str(fh) -> str:
    (n,) = struct.unpack("<I", fh.read(4))
    return fh.read(n).decode("utf-8")


def _w_spec(fh, spec: LayerSpec) -> None:
    fh.write(
        struct.pack(
            "<10I",
            spec.in_channels,
            spec.out_channels,
            *spec.kernel,
            *spec.stride,
            *spec.padding,
            *spec.output_padding,
        )
    )


def _r_spec(fh) -> LayerSpec:
    v = struct.unpack("<10I", fh.read(40))
    return LayerSpec(v[0], v[1], (v[2], v[3]), (v[4], v[5]), (v[6], v[7]), (v[8], v[9]))


@dataclass
class Checkpoint:
    dsp_config: DspConfig
    standardizer: Standardizer
    arch: Architecture
    train_config: TrainConfig
    vae: Vae
    history: History


def save_checkpoint(
    path: str,
    dsp_config: DspConfig,
    standardizer: Standardizer,
    arch: Architecture,
    train_config: TrainConfig,
    vae: Vae,
    history: History,
) -> None:
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        c = dsp_config
        fh.write(struct.pack("<I", c.target_rate))
        fh.write(struct.pack("<5d", c.clip_seconds, c.window_ms, c.overlap, c.log_floor, c.mel_fmin))
        fh.write(struct.pack("<d", c.mel_fmax))
        fh.write(struct.pack("<3I", c.fft_size, c.n_mels, c.n_mfcc_kept))

        fh.write(struct.pack("<I", len(standardizer.mean)))
        fh.write(np.asarray(standardizer.mean, dtype="<f8").tobytes())
        fh.write(np.asarray(standardizer.std, dtype="<f8").tobytes())

        fh.write(struct.pack("<2I", *arch.input_hw))
        fh.write(struct.pack("<I", arch.latent_channels))
        fh.write(struct.pack("<I", len(arch.encoder)))
        for spec in arch.encoder:
            _w_spec(fh, spec)
        fh.write(struct.pack("<I", len(arch.decoder)))
        for spec in arch.decoder:
            _w_spec(fh, spec)

        t = train_config
        _w_str(fh, t.reconstruction_loss)
        _w_str(fh, t.optimizer)
        _w_str(fh, t.hidden_activation)
        _w_str(fh, t.output_activation)
        fh.write(struct.pack("<2d", t.learning_rate, t.dropout_rate))
        fh.write(struct.pack("<3I", t.max_epochs, t.patience, t.batch_size))
        fh.write(struct.pack("<q", t.seed))

        tensors = dict(vae.named_params())
        tensors.update(vae.named_buffers())
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            _w_str(fh, name)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())

        fh.write(struct.pack("<I", len(history.epochs)))
        for rec in history.epochs:
            fh.write(struct.pack("<Idd", rec.epoch, rec.train_loss, rec.monitor_loss))
        fh.write(struct.pack("<I?", history.best_epoch, history.stopped_early))


def load_checkpoint(path: str) -> Checkpoint:
    try:
        with open(path, "rb") as fh:
            if fh.read(4) != MAGIC:
                raise DataError(f"{path}: not a model checkpoint (bad magic)")
            (version,) = struct.unpack("<I", fh.read(4))
            if version != VERSION:
                raise DataError(f"{path}: unsupported checkpoint version {version}")
            (target_rate,) = struct.unpack("<I", fh.read(4))
            clip_seconds, window_ms, overlap, log_floor, mel_fmin = struct.unpack("<5d", fh.read(40))
            (mel_fmax,) = struct.unpack("<d", fh.read(8))
            fft_size, n_mels, n_mfcc_kept = struct.unpack("<3I", fh.read(12))
            dsp_config = DspConfig(
                target_rate=target_rate,
                clip_seconds=clip_seconds,
                window_ms=window_ms,
                overlap=overlap,
                fft_size=fft_size,
                n_mels=n_mels,
                n_mfcc_kept=n_mfcc_kept,
                log_floor=log_floor,
                mel_fmin=mel_fmin,
                mel_fmax=mel_fmax,
            )

            (n_coef,) = struct.unpack("<I", fh.read(4))
            mean = np.frombuffer(fh.read(8 * n_coef), dtype="<f8").copy()
            std = np.frombuffer(fh.read(8 * n_coef), dtype="<f8").copy()
            standardizer = Standardizer(mean, std)

            input_hw = struct.unpack("<2I", fh.read(8))
            (latent_channels,) = struct.unpack("<I", fh.read(4))
            (n_enc,) = struct.unpack("<I", fh.read(4))
            encoder = tuple(_r_spec(fh) for _ in range(n_enc))
            (n_dec,) = struct.unpack("<I", fh.read(4))
            decoder = tuple(_r_spec(fh) for _ in range(n_dec))
            arch = Architecture(input_hw, encoder, latent_channels, decoder)

            recon = _r_str(fh)
            optimizer = _r_str(fh)
            hidden_act = _r_str(fh)
            output_act = _r_str(fh)
            learning_rate, dropout_rate = struct.unpack("<2d", fh.read(16))
            max_epochs, patience, batch_size = struct.unpack("<3I", fh.read(12))
            (seed,) = struct.unpack("<q", fh.read(8))
            train_config = TrainConfig(
                reconstruction_loss=recon,
                optimizer=optimizer,
                learning_rate=learning_rate,
                max_epochs=max_epochs,
                patience=patience,
                batch_size=batch_size,
                hidden_activation=hidden_act,
                output_activation=output_act,
                dropout_rate=dropout_rate,
                seed=seed,
            )

            (n_tensors,) = struct.unpack("<I", fh.read(4))
            state = {}
            for _ in range(n_tensors):
                name = _r_str(fh)
                (ndim,) = struct.unpack("<I", fh.read(4))
                shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
                count = int(np.prod(shape)) if ndim else 1
                state[name] = np.frombuffer(fh.read(4 * count), dtype="<f4").reshape(shape).copy()

            (n_epochs,) = struct.unpack("<I", fh.read(4))
            history = History()
            for _ in range(n_epochs):
                epoch, train_loss, monitor = struct.unpack("<Idd", fh.read(20))
                history.epochs.append(EpochRecord(epoch, train_loss, monitor))
            best_epoch, stopped = struct.unpack("<I?", fh.read(5))
            history.best_epoch = best_epoch
            history.stopped_early = stopped
    except (OSError, struct.error) as exc:
        raise DataError(f"cannot read checkpoint {path!r}: {exc}") from exc

    vae = Vae(
        arch,
        hidden_activation=train_config.hidden_activation,
        output_activation=train_config.output_activation,
        dropout_rate=train_config.dropout_rate,
        rng=np.random.default_rng(0),
        dtype=np.float32,
    )
    vae.load_state(state)
    return Checkpoint(dsp_config, standardizer, arch, train_config, vae, history)
