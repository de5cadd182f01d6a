#!/usr/bin/env python3
"""Interpretability suite on a trained pathway model: neural path weights,
mutual-information pathway ranking, a cosine clustermap and PCA feature maps.

Artifacts are written as SVG/CSV under demos/output/interpretability/.
"""

import os

from pathae.dataio import apply_normalizer, fit_normalizer, resolve_pathways
from pathae.interpret import (
    emit_clustermap,
    emit_featuremap,
    hierarchical_cluster,
    pca_2d,
    rank_pathways_by_mi,
    top_genes_by_anpw,
)
from pathae.models import ArchitectureConfig, TrainConfig, build_model, fit
from pathae.ndcore import RngStream
from pathae.pipeline import extract_representation
from pathae.synth import make_synthetic

OUT = os.path.join(os.path.dirname(__file__), "output", "interpretability")
os.makedirs(OUT, exist_ok=True)

# --- train a pathway model ---------------------------------------------------
data = make_synthetic(n_classes=4, n_factors=6, n_pathways=10, n_genes=150,
                      n_background=50, n_train=240, n_test=120, seed=13)
masks, _ = resolve_pathways(data.pathways, data.train.gene_names)
X = apply_normalizer(fit_normalizer(data.train, "zscore"), data.train).values
arch = ArchitectureConfig(kind="paae", encoder_layer_sizes=[10],
                          pathway_hidden_sizes=[5], dropout_rate=0.25)
rng = RngStream(31)
model = build_model(arch, data.train.n_genes, masks, rng,
                    gene_names=data.train.gene_names)
fit(model, X, TrainConfig(epochs=250, learning_rate=3e-4, batch_size=64), rng)

# --- rank pathways by mutual information with the class labels ---------------
a = extract_representation(model, X, "a")
names = [m.name for m in masks]
ranked = rank_pathways_by_mi(a, data.train_labels, names)
print("pathways by mutual information with the labels:")
for name, mi in ranked[:5]:
    print(f"  {name}: {mi:.3f} nats")

# --- the most influential genes per pathway (signed neural path weights) -----
print("\ntop genes of the leading pathway:")
top_idx = names.index(ranked[0][0])
gene_names = [model.gene_names[i] for i in masks[top_idx].indices]
for gene, weight in top_genes_by_anpw(model.params.pathway_encoders[top_idx],
                                      gene_names, k=5):
    print(f"  {gene} {weight:+.3f}")

# --- clustermap over the top pathways ----------------------------------------
top5 = [names.index(n) for n, _ in ranked[:5]]
sub = a[:, top5]
svg, sidecar = emit_clustermap(
    sub, list(data.train_labels), [names[j] for j in top5],
    os.path.join(OUT, "clustermap-demo-paae-a.svg"),
    row_tree=hierarchical_cluster(sub, metric="cosine"),
    col_tree=hierarchical_cluster(sub.T, metric="cosine"),
    title="pathway activities, cosine distance, average linkage",
)
print(f"\nwrote {svg}\n  and sidecar {sidecar}")

# --- 2-D feature maps (PCA): classes plus per-pathway intensity ---------------
coords, fractions = pca_2d(a)
print(f"PCA explained-variance fractions: {fractions.round(3).tolist()}")
files = emit_featuremap(coords, list(data.train_labels), sub,
                        [names[j] for j in top5], OUT, "featuremap-demo-paae-a")
print(f"wrote {len(files)} scatter panels under {OUT}")
