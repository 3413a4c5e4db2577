"""Quickstart: train the two projection heads and run cross-media search.

Generates a small clustered synthetic corpus, fits the alignment model for a
few epochs, then queries in both directions and prints the top hits.  Run:

    python3 demos/quickstart_alignment.py
"""

import numpy as np

import cardl


def main():
    print("=== 1. generate a paired text/image corpus ===")
    config = cardl.SyntheticConfig(
        clusters=4, pairs_per_cluster=25, text_dim=48, image_dim=64,
        latent_dim=8, noise_sigma=0.1, seed=7,
    )
    ds = cardl.generate_synthetic(config)
    print(f"{len(ds.pairs)} pairs in {config.clusters} clusters; "
          f"text dim {config.text_dim}, image dim {config.image_dim}")

    print("\n=== 2. train both projection heads ===")
    train_cfg = cardl.TrainConfig(epochs=30, unified_dim=32, seed=0)
    model, history = cardl.fit(ds.text_records, ds.image_records, ds.pairs, train_cfg)
    print(f"mean loss per epoch: {history[0]:.4f} -> {history[-1]:.4f}")

    print("\n=== 3. index the unified space ===")
    unified = cardl.unified_records(model, ds.text_records + ds.image_records)
    index = cardl.build_index_from_records(unified)
    print(f"{len(index)} unit vectors, dim {index.dimension}")

    print("\n=== 4. text -> image search ===")
    query = ds.text_records[0]
    partner = ds.pairs[0].image_id
    for r in cardl.cross_media_search(model, index, query, k=5, direction="txt2img"):
        marker = "  <- true partner" if r.id == partner else ""
        print(f"  rank {r.rank}  {r.id}  score {r.score:.4f}{marker}")

    print("\n=== 5. image -> text search ===")
    query = ds.image_records[0]
    partner = ds.pairs[0].text_id
    for r in cardl.cross_media_search(model, index, query, k=5, direction="img2txt"):
        marker = "  <- true partner" if r.id == partner else ""
        print(f"  rank {r.rank}  {r.id}  score {r.score:.4f}{marker}")

    print("\nscores are cosines in the shared space, so they are directly "
          "comparable across directions")


if __name__ == "__main__":
    main()
