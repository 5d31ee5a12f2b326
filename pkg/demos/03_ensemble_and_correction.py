"""Probability-product ensembling and self-consistency correction.

Several models trained with different hyperparameters are combined by
element-wise multiplication of their per-head probabilities (argmax after).
The fine-grained head is then repaired wherever it contradicts the two
binary heads: promoted to the best non-None category when both are
positive, demoted to None when both are negative.

Run: python demos/03_ensemble_and_correction.py   (~20 s)
"""

from hatemtl import (
    EncoderConfig,
    GridSpec,
    ModelConfig,
    TrainConfig,
    build_report,
    generate_corpus,
    split_corpus,
)
from hatemtl.consistency import correct_batch
from hatemtl.encoder import features_matrix
from hatemtl.ensemble import ensemble_combine, predict
from hatemtl.evaluation import contradiction_rates, render_report
from hatemtl.model import ProbTriple, batch_forward
from hatemtl.training import grid_search

corpus = generate_corpus(1200, seed=7)
train_set, dev_set, test_set = split_corpus(corpus, (0.7, 0.1, 0.2), seed=7)
model_cfg = ModelConfig(
    encoder=EncoderConfig(dim=32, hash_buckets=4096, word_ngrams=(1,), char_ngrams=(), seed=7),
    hidden_dim=32,
)

# A small hyperparameter grid; every cell is one independent seeded run.
grid = GridSpec(batch_sizes=(8, 16), peak_lrs=(0.05, 0.02))
print(f"training {len(grid.cells())} grid cells ...")
result = grid_search(
    train_set, dev_set, model_cfg, TrainConfig(peak_lr=0.05, warmup_steps=0, epochs=3, seed=7), grid
)
for task in ("offd", "hsd", "hsc"):
    order = result.ranking(task)
    best = result.best_checkpoint(task)
    print(f"  {task}: ranking {order}, best dev macro-F1 {best.dev_f1_macro:.4f}")

# Per-model probabilities on the test set, then the element-wise product.
feats = features_matrix(list(test_set), model_cfg.encoder)
per_model = []
for run in result.runs:
    probs = batch_forward(feats, run.result.checkpoints["hsc"].params, model_cfg)
    per_model.append(
        [
            ProbTriple(offd=probs["offd"][i], hsd=probs["hsd"][i], hsc=probs["hsc"][i])
            for i in range(len(test_set))
        ]
    )
combined = [ensemble_combine([m[i] for m in per_model]) for i in range(len(test_set))]
preds = [predict(t) for t in combined]

outcomes, counts = correct_batch(preds)
corrected = [o.after for o in outcomes]
print(
    f"\ncorrection: {counts['promote_second_best']} promoted, "
    f"{counts['demote_to_none']} demoted, {counts['none']} untouched"
)
before = contradiction_rates(preds)
after = contradiction_rates(corrected)
print(f"HSD<->HSC contradiction rate: {100 * before[1]:.2f}% -> {100 * after[1]:.2f}%")

gold = [s.gold for s in test_set]
print("\n" + render_report(build_report(gold, preds, corrected=corrected)))
