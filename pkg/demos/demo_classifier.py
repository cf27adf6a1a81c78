"""Train the point-cloud classifier on a tiny two-walker corpus.

Shows the full training loop (standardization, augmentation, Adam, early
stopping), the finite-difference gradient verification, and what 8-bit
weight quantization does to accuracy and model size.
"""

import numpy as np

from gaittrack import simulator
from gaittrack.classifier import (
    FeatureStats,
    TcpcnModel,
    TrainConfig,
    evaluate_model,
    grad_check,
    preprocess,
    quantize,
    train,
)

profiles = simulator.default_profiles(2)
corpus = simulator.generate_training_corpus(profiles, minutes_per_subject=1.5,
                                            rooms=2, seed=21)
print(f"corpus: {len(corpus.windows)} windows of 30 frames, "
      f"classes {np.bincount(corpus.labels)}")

cfg = TrainConfig(learning_rate=5e-4, batch_size=16, max_epochs=6, patience=3,
                  seed=0)
model, logbook = train(corpus, cfg)
print(f"\nmodel: {model.parameter_count} parameters")
for e in logbook.epochs:
    print(f"  epoch {e.epoch}: train loss {e.train_loss:.3f}  "
          f"val loss {e.val_loss:.3f}  val acc {e.val_accuracy:.3f}  "
          f"({e.seconds:.0f} s)")

# verify the analytic gradients on a small double-precision twin
check = TcpcnModel(4, seed=3, dtype=np.float64, p_drop=0.0)
rng = np.random.default_rng(5)
err = grad_check(check, rng.standard_normal((2, 6, 8, 5)),
                 np.eye(4)[[0, 2]], rng=rng)
print(f"\ngradient check vs central differences: max rel error {err:.1e}")

stats = FeatureStats(model.feature_mean.astype(float),
                     model.feature_std.astype(float))
tensors = np.stack([preprocess(w, stats, cfg.n_max, np.random.default_rng(9))
                    for w in corpus.windows])
_, acc = evaluate_model(model, tensors, corpus.labels)
quantized = quantize(model)
_, qacc = evaluate_model(quantized, tensors, corpus.labels)
print(f"\naccuracy on the corpus: float32 {acc:.3f}  int8 {qacc:.3f}")
weights = sum(w.size for w in model.weight_arrays())
print(f"weight payload: {weights * 4 / 1024:.0f} KiB float32 -> "
      f"{weights / 1024:.0f} KiB int8")
