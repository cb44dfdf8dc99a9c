"""
Training the decoder on pseudo-labels, with and without the edge branch
=======================================================================

Everything at desk scale: 64 synthetic images at 64 px, a two-block ViT,
200 iterations per arm. Both arms together take under a minute on CPU.

    python demos/toy_training.py [out_dir]
"""
import json
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from sodistill.core import read_manifest
from sodistill.harness import TOY_CONFIG, ablation
from sodistill.labelgen import MockGrounder, MockSegmenter, run_pipeline
from sodistill.phrasekit import MockCaptioner
from sodistill.synthetic import generate_shapes_dataset

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/toy_training")
data = out / "shapes"
generate_shapes_dataset(data, n=64, size=64, seed=0)
records = read_manifest(data / "manifest.jsonl")
run_pipeline(records, MockCaptioner.from_file(data / "captions.json"), MockGrounder(), MockSegmenter(),
             data / "labels", tau=0.0, base=data)

train_recs = [r for r in records if r.split == "train"]
test_recs = [r for r in records if r.split == "test"]
print(f"{len(train_recs)} training images, {len(test_recs)} held out")

# both arms share seed, data and budget; only the edge branch differs
res = ablation("decoder", TOY_CONFIG, out / "decoder", train_recs, data / "labels", test_recs, data / "gt", base=data)
print(res.format())

# %%
# loss curves from the two logs; the edge term is left out so the arms compare
fig, ax = plt.subplots(figsize=(5, 3))
for k, name in enumerate(res.arms):
    rows = [json.loads(l) for l in (out / "decoder" / f"arm{k}" / "loss_log.jsonl").read_text().splitlines()]
    ax.plot([r["iter"] for r in rows], [r["bce"] + r["pbce"] + r["iou"] for r in rows], label=f"{name} edge branch")
ax.set_xlabel("iteration")
ax.set_ylabel("saliency loss (bce + pbce + iou)")
ax.legend()
fig.tight_layout()
fig.savefig(out / "loss.png", dpi=100)
print("figure:", out / "loss.png")
