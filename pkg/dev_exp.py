"""Dev experiment: check criterion-8 orderings on the eight-mode ring."""
import time
import numpy as np
import proxflow as pf
from proxflow import data_io, metrics, samplers, trainer
from proxflow.predictor import init_predictor
from proxflow.data_io import derived_rng

SEED = 11
t0 = time.time()

train_ds = data_io.gen_synthetic("eight_mode_ring", 4096, derived_rng(SEED, "dataset", "train"))
real = data_io.gen_synthetic("eight_mode_ring", 2000, derived_rng(SEED, "dataset", "real")).sample_set()

models = {}
for regime in ("gpfn", "bfn"):
    net = init_predictor(2, hidden=(128, 128), time_dim=16, rng=derived_rng(SEED, "init", regime))
    cfg = trainer.TrainConfig(regime=regime, T=20, epochs=300, batch_size=128, lr=2e-4, seed=SEED)
    res = trainer.train(cfg, train_ds.samples, net, rng=derived_rng(SEED, "train", regime))
    models[regime] = samplers.TrainedModel(net=res.ema, regime=regime)
    print(f"{regime}: steps={res.steps} loss[0]={res.epoch_losses[0]:.4g} "
          f"loss[-1]={res.epoch_losses[-1]:.4g}  ({time.time()-t0:.0f}s)")

ext = metrics.train_feature_extractor(
    train_ds.samples, train_ds.labels, feat_width=32, hidden=(64,),
    epochs=120, rng=derived_rng(SEED, "extractor"))
print(f"extractor acc={ext.train_accuracy:.4f} ({time.time()-t0:.0f}s)")

def cell(tag, nfe):
    kind = samplers.SamplerKind(tag, nfe)
    model = models[samplers.regime_for_sampler(tag)]
    gen = samplers.generate(kind, model, 2000, derived_rng(SEED, "sweep", tag, nfe))
    rep = metrics.compute_report(real, gen, ext, nfe=nfe, sampler=tag,
                                 rng=derived_rng(SEED, "eval"))
    print(f"{tag:11s} nfe={nfe:3d} swd={rep.swd:.5f} afid={rep.afid:8.3f} is={rep.is_score:.2f} "
          f"p={rep.precision:.3f} r={rep.recall:.3f} d={rep.density:.3f} c={rep.coverage:.3f} "
          f"div={rep.diversity:.4f}")
    return rep

reports = {}
for tag in ("gpfn-det", "gpfn-stoch", "bfn-stoch", "bfn-det"):
    for nfe in (5, 10, 20, 40, 100):
        reports[(tag, nfe)] = cell(tag, nfe)

print(f"\ntotal {time.time()-t0:.0f}s")
a = reports[("gpfn-det", 5)].swd < reports[("bfn-stoch", 100)].swd
b = all(
    max(reports[("gpfn-det", n)].swd, reports[("gpfn-stoch", n)].swd)
    / min(reports[("gpfn-det", n)].swd, reports[("gpfn-stoch", n)].swd) <= 1.15
    for n in (20, 40, 100))
c = reports[("bfn-det", 20)].diversity < 0.01 and reports[("gpfn-det", 20)].diversity > 0.1
d = reports[("gpfn-det", 20)].recall >= 5 * reports[("bfn-stoch", 20)].recall
print(f"(a) gpfn-det@5 < bfn-stoch@100 swd: {a}")
print(f"(b) det/stoch swd within 15% at nfe>=20: {b}",
      [f"{reports[('gpfn-det',n)].swd/reports[('gpfn-stoch',n)].swd:.3f}" for n in (20,40,100)])
print(f"(c) bfn-det div<0.01, gpfn div>0.1: {c}")
print(f"(d) gpfn recall@20 >= 5x bfn-stoch recall@20: {d} "
      f"({reports[('gpfn-det',20)].recall:.3f} vs {reports[('bfn-stoch',20)].recall:.3f})")
