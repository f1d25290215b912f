"""
Training the two-stage network and removing rain
================================================

GAN cycles on heavy-rain images alternate with pixel-loss steps on all
images, both updating one shared generator. The trained generator then
replaces the detail layer of each held-out image.
"""
import sys
import time
from pathlib import Path

import numpy as np

from dtdn.metrics import psnr, ssim
from dtdn.rain import build_dataset, load_pairs
from dtdn.trainer import TrainConfig, TrainingData, derain_batch, save_checkpoint, train

root = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out") / "train"
rounds = int(sys.argv[2]) if len(sys.argv) > 2 else 100

train_set = build_dataset(root / "train", n=200, size=32, seed=0)
test_set = build_dataset(root / "test", n=50, size=32, seed=1000)
cfg = TrainConfig(seed=0, rounds=rounds)
data = TrainingData.from_manifest(train_set, cfg.filter)

# one log row per discriminator, generator and pixel-loss update
t0 = time.time()
model, rows = train(data, cfg)
print(f"{rounds} rounds, {len(rows)} updates in {time.time() - t0:.0f} s")
print("last rows:", *rows[-3:], sep="\n  ")

# score on held-out pairs that actually contain rain
rainy, clean = load_pairs(test_set)
keep = np.array([e.record.k > 0 for e in test_set.entries])
rainy, clean = rainy[keep], clean[keep]
out = derain_batch(rainy, model)
for name, imgs in (("rainy", rainy), ("derained", out)):
    p = np.mean([psnr(a, b) for a, b in zip(imgs, clean)])
    s = np.mean([ssim(a, b) for a, b in zip(imgs, clean)])
    print(f"{name:9s} PSNR {p:6.2f} dB  SSIM {s:.4f}")

(root / "checkpoint.bin").write_bytes(save_checkpoint(model))
