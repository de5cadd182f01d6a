#!/usr/bin/env python3
"""Train a pathway-constrained autoencoder on synthetic expression data and
compare it with a dense baseline of the same latent width.

The pathway model's encoder only sees genes inside its masks, yet it has to
reconstruct every gene, background genes included, from the decoder side.
"""

import numpy as np

from pathae.classifiers import lr_fit, lr_predict_proba
from pathae.dataio import apply_normalizer, fit_normalizer, resolve_pathways
from pathae.metrics import roc_auc_macro
from pathae.models import (
    ArchitectureConfig,
    TrainConfig,
    build_model,
    count_params,
    fit,
    mse_loss,
    reconstruct,
)
from pathae.ndcore import RngStream
from pathae.pipeline import extract_representation
from pathae.synth import make_synthetic

# --- synthetic cohort: latent factors -> pathway blocks -> noise -----------
data = make_synthetic(n_classes=4, n_factors=6, n_pathways=12, n_genes=200,
                      n_background=80, n_train=300, n_test=200, seed=5)
print(f"{data.train.n_samples} train / {data.test.n_samples} test samples, "
      f"{data.train.n_genes} genes, {len(data.pathways)} pathways")

masks, rep = resolve_pathways(data.pathways, data.train.gene_names)
X_train = apply_normalizer(fit_normalizer(data.train, "zscore"), data.train).values
X_test = apply_normalizer(fit_normalizer(data.test, "zscore"), data.test).values

# --- train the pathway model and a dense baseline --------------------------
config = TrainConfig(epochs=300, learning_rate=3e-4, batch_size=64)
results = {}
for kind in ("paae", "ae"):
    arch = ArchitectureConfig(
        kind=kind, encoder_layer_sizes=[12],
        pathway_hidden_sizes=[6], dropout_rate=0.25,
    )
    rng = RngStream(11)
    model = build_model(arch, data.train.n_genes, masks, rng)
    history = fit(model, X_train, config, rng)
    test_mse, _ = mse_loss(X_test, reconstruct(model, X_test))
    results[kind] = (model, history, test_mse)
    print(f"\n{kind.upper()}: {count_params(model)} parameters, "
          f"final train loss {history[-1]:.4f}, held-out MSE {test_mse:.4f}")

baseline = float(np.mean((X_test - X_train.mean(axis=0)) ** 2))
print(f"\npredict-the-mean baseline MSE: {baseline:.4f}")

# --- classify in each representation space ---------------------------------
paae = results["paae"][0]
for space in ("a", "z"):
    rep_train = extract_representation(paae, X_train, space)
    rep_test = extract_representation(paae, X_test, space)
    clf = lr_fit(rep_train, data.train_labels)
    auc = roc_auc_macro(data.test_labels, lr_predict_proba(clf, rep_test),
                        vocabulary=list(clf.classes))
    print(f"logistic regression on PAAE space '{space}': "
          f"macro ROC AUC {auc:.3f} ({rep_test.shape[1]} features)")
