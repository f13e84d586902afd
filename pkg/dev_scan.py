"""Scan training budget / schedule-T / mode width for the acceptance config."""
import itertools
import sys
import time
import numpy as np
import proxflow as pf
from proxflow import data_io, metrics, samplers, trainer
from proxflow.predictor import init_predictor
from proxflow.data_io import derived_rng

SEED = 11

def run(epochs, T, ring_std):
    data_io.RING_STD = ring_std
    t0 = time.time()
    train_ds = data_io.gen_synthetic("eight_mode_ring", 4096, derived_rng(SEED, "dataset", "train"))
    real = data_io.gen_synthetic("eight_mode_ring", 2000, derived_rng(SEED, "dataset", "real")).sample_set()
    models = {}
    for regime in ("gpfn", "bfn"):
        net = init_predictor(2, hidden=(128, 128), time_dim=16, rng=derived_rng(SEED, "init", regime))
        cfg = trainer.TrainConfig(regime=regime, T=T, epochs=epochs, batch_size=128, lr=2e-4, seed=SEED)
        res = trainer.train(cfg, train_ds.samples, net, rng=derived_rng(SEED, "train", regime))
        models[regime] = samplers.TrainedModel(net=res.ema, regime=regime)
    ext = metrics.train_feature_extractor(
        train_ds.samples, train_ds.labels, feat_width=32, hidden=(64,),
        epochs=120, rng=derived_rng(SEED, "extractor"))
    reps = {}
    for tag, nfe in itertools.product(("gpfn-det", "gpfn-stoch", "bfn-stoch", "bfn-det"),
                                      (5, 20, 40, 100)):
        kind = samplers.SamplerKind(tag, nfe)
        model = models[samplers.regime_for_sampler(tag)]
        gen = samplers.generate(kind, model, 2000, derived_rng(SEED, "sweep", tag, nfe))
        reps[(tag, nfe)] = metrics.compute_report(real, gen, ext, nfe=nfe, sampler=tag,
                                                  rng=derived_rng(SEED, "eval"))
    a = reps[("gpfn-det", 5)].swd < reps[("bfn-stoch", 100)].swd
    ratios = [max(reps[("gpfn-det", n)].swd, reps[("gpfn-stoch", n)].swd)
              / min(reps[("gpfn-det", n)].swd, reps[("gpfn-stoch", n)].swd) for n in (20, 40, 100)]
    b = all(x <= 1.15 for x in ratios)
    c = reps[("bfn-det", 20)].diversity < 0.01 and reps[("gpfn-det", 20)].diversity > 0.1
    d = reps[("gpfn-det", 20)].recall >= 5 * reps[("bfn-stoch", 20)].recall
    print(f"epochs={epochs} T={T} std={ring_std}: a={a} b={b}({[f'{x:.2f}' for x in ratios]}) "
          f"c={c} d={d} | gpfn swd@5/20/100={reps[('gpfn-det',5)].swd:.4f}/{reps[('gpfn-det',20)].swd:.4f}/"
          f"{reps[('gpfn-det',100)].swd:.4f} p@20={reps[('gpfn-det',20)].precision:.2f} "
          f"r@20={reps[('gpfn-det',20)].recall:.2f} | bfn-stoch swd@20/100="
          f"{reps[('bfn-stoch',20)].swd:.4f}/{reps[('bfn-stoch',100)].swd:.4f} "
          f"r@20={reps[('bfn-stoch',20)].recall:.3f} div@20={reps[('bfn-stoch',20)].diversity:.2f} "
          f"({time.time()-t0:.0f}s)", flush=True)

for epochs, T, std in [(300, 100, 0.05), (1000, 100, 0.05), (100, 100, 0.05), (300, 100, 0.03)]:
    run(epochs, T, std)
