"""
Block-wise recovery of a phantom image
======================================

Split a 32 x 32 Shepp-Logan phantom into 8 x 8 blocks, sense each block
with one-bit measurements in the 2-D Haar basis and compare the adaptive
scheme against a single stage.  Reconstructions are written as PGM files
next to this script.
"""

from pathlib import Path

from adaptive_onebit.experiments import ImageExperimentConfig, run_image_experiment, write_pgm

out = Path(__file__).with_suffix("")
out.mkdir(exist_ok=True)
write_pgm(out / "truth.pgm", run_image_experiment(ImageExperimentConfig(image_side=32, block_side=8,
                                                                        measurements_per_block=0)).truth)

for T in (1, 6):
    cfg = ImageExperimentConfig(image_side=32, block_side=8, measurements_per_block=3000, T=T, s=16, seed=3)
    res = run_image_experiment(cfg)
    write_pgm(out / f"recovered_T{T}.pgm", res.reconstruction)
    worst = max(b.norm_error for b in res.blocks)
    print(f"T={T}: PSNR {res.psnr:.1f} dB, worst block error {worst:.3f}")
