"""
Pseudo-labels from text prompts
===============================

Caption an image, turn the phrases into a grounding prompt, keep the boxes
that clear tau, mask each box and take the union. The mock backends read
the synthetic scenes directly, so the whole chain runs in a second.

    python demos/pseudo_labels.py [out_dir]
"""
import sys
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from sodistill.core import read_image, read_manifest, read_mask
from sodistill.labelgen import MockGrounder, MockSegmenter, run_pipeline
from sodistill.phrasekit import MockCaptioner, build_prompt, caption
from sodistill.synthetic import generate_shapes_dataset, write_disambiguation_fixture

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out/pseudo_labels")

# a small shapes set: coloured discs and squares, some grey distractors
generate_shapes_dataset(out / "shapes", n=12, size=64, seed=1)
records = read_manifest(out / "shapes" / "manifest.jsonl")
captioner = MockCaptioner.from_file(out / "shapes" / "captions.json")

first = records[0]
phrases = caption(captioner, first, base=out / "shapes")
print("caption phrases:", [p.format() for p in phrases.phrases])
print("prompt with adjectives:   ", build_prompt(phrases))
print("prompt without adjectives:", build_prompt(phrases, adjectives=False))

# mock logits are box area over image area, so tau=0 keeps every detection
report = run_pipeline(records, captioner, MockGrounder(), MockSegmenter(), out / "shapes" / "labels",
                      tau=0.0, base=out / "shapes")
agree = sum(np.array_equal(read_mask(out / "shapes" / "labels" / f"{r.image_id}.png"),
                           read_mask(out / "shapes" / "gt" / f"{r.image_id}.png")) for r in records)
print(f"{len(records)} images labelled, {agree} identical to the synthetic ground truth")

# %%
# Why adjectives matter: two discs, only the red one is salient. "disc ."
# grounds both; "red disc ." grounds one.
recs = write_disambiguation_fixture(out / "dis")
cap = MockCaptioner.from_file(out / "dis" / "captions.json")
masks = {}
for flag in (True, False):
    run_pipeline(recs, cap, MockGrounder(), MockSegmenter(), out / "dis" / f"adj_{flag}", tau=0.0,
                 adjectives=flag, base=out / "dis")
    masks[flag] = read_mask(out / "dis" / f"adj_{flag}" / "disamb.png")
print(f"union mask: {masks[True].sum()} px with adjectives, {masks[False].sum()} px without")

fig, ax = plt.subplots(1, 3, figsize=(7.5, 2.6))
ax[0].imshow(read_image(out / "dis" / "images" / "disamb.png"))
ax[0].set_title("image")
ax[1].imshow(masks[True], cmap="gray")
ax[1].set_title("with adjectives")
ax[2].imshow(masks[False], cmap="gray")
ax[2].set_title("without")
for a in ax:
    a.axis("off")
fig.tight_layout()
fig.savefig(out / "adjectives.png", dpi=100)
print("figure:", out / "adjectives.png")
