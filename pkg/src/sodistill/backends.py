"""Adapters from pretrained captioning, grounding and promptable segmentation
models to the backend contracts.

Nothing here is imported by the rest of the package. The adapters load
``transformers`` and the weights on construction and raise
BackendUnavailable if either is missing; weights are looked up in the
local cache only unless ``local_files_only=False``.
"""
from __future__ import annotations

import numpy as np

from .labelgen import ScoredBox
from .phrasekit import BackendUnavailable, split_prompt

DEFAULT_CAPTIONER = "Salesforce/blip-image-captioning-base"
DEFAULT_GROUNDER = "IDEA-Research/grounding-dino-tiny"
DEFAULT_SEGMENTER = "facebook/sam-vit-base"


def _load(kind: str, model_id: str, local_files_only: bool):
    try:
        import transformers
    except ImportError as exc:
        raise BackendUnavailable("the real backends need the 'transformers' package") from exc
    proc_cls, model_cls = {
        "caption": ("BlipProcessor", "BlipForConditionalGeneration"),
        "ground": ("AutoProcessor", "AutoModelForZeroShotObjectDetection"),
        "segment": ("SamProcessor", "SamModel"),
    }[kind]
    try:
        proc = getattr(transformers, proc_cls).from_pretrained(model_id, local_files_only=local_files_only)
        model = getattr(transformers, model_cls).from_pretrained(model_id, local_files_only=local_files_only)
    except (OSError, ValueError) as exc:
        raise BackendUnavailable(f"cannot load {model_id}: {exc}") from exc
    model.eval()
    return proc, model


class BlipCaptioner:
    """Captions are split on commas and ' and ' into candidate phrases."""

    reentrant = False

    def __init__(self, model_id: str = DEFAULT_CAPTIONER, local_files_only: bool = True, max_new_tokens: int = 30):
        self.processor, self.model = _load("caption", model_id, local_files_only)
        self.max_new_tokens = max_new_tokens

    def describe(self, image: np.ndarray):
        import torch

        inputs = self.processor(images=image, return_tensors="pt")
        with torch.no_grad():
            ids = self.model.generate(**inputs, max_new_tokens=self.max_new_tokens)
        text = self.processor.decode(ids[0], skip_special_tokens=True)
        parts = [p.strip() for chunk in text.split(",") for p in chunk.split(" and ")]
        return [p for p in parts if p]


class GroundingDinoGrounder:
    """Open-vocabulary detector; logits are the box scores before any cutoff."""

    reentrant = False

    def __init__(self, model_id: str = DEFAULT_GROUNDER, local_files_only: bool = True):
        self.processor, self.model = _load("ground", model_id, local_files_only)

    def detect(self, image: np.ndarray, prompt: str):
        import torch

        phrases = split_prompt(prompt)
        by_text = {p.format(): p for p in phrases}
        inputs = self.processor(images=image, text=prompt, return_tensors="pt")
        with torch.no_grad():
            outputs = self.model(**inputs)
        h, w = image.shape[:2]
        res = self.processor.post_process_grounded_object_detection(
            outputs, inputs.input_ids, threshold=0.0, text_threshold=0.0, target_sizes=[(h, w)]
        )[0]
        out = []
        labels = res.get("text_labels", res.get("labels"))
        for box, score, label in zip(res["boxes"].tolist(), res["scores"].tolist(), labels):
            x1, y1, x2, y2 = box
            x1, y1 = max(0, int(np.floor(x1))), max(0, int(np.floor(y1)))
            x2, y2 = min(w, int(np.ceil(x2))), min(h, int(np.ceil(y2)))
            if x2 <= x1 or y2 <= y1:
                continue
            phrase = by_text.get(str(label).strip()) or phrases[0]
            out.append(((x1, y1, x2, y2), float(score), phrase))
        return out


class SamSegmenter:
    """Box-prompted segmentation; keeps the highest-IoU-score mask."""

    reentrant = False

    def __init__(self, model_id: str = DEFAULT_SEGMENTER, local_files_only: bool = True):
        self.processor, self.model = _load("segment", model_id, local_files_only)

    def segment(self, image: np.ndarray, box: ScoredBox) -> np.ndarray:
        import torch

        inputs = self.processor(images=image, input_boxes=[[list(map(float, box.coords))]], return_tensors="pt")
        with torch.no_grad():
            outputs = self.model(**inputs)
        masks = self.processor.image_processor.post_process_masks(
            outputs.pred_masks, inputs["original_sizes"], inputs["reshaped_input_sizes"]
        )[0][0]
        best = int(torch.argmax(outputs.iou_scores[0, 0]))
        return masks[best].numpy().astype(np.uint8)


def real_backends(local_files_only: bool = True):
    return (
        BlipCaptioner(local_files_only=local_files_only),
        GroundingDinoGrounder(local_files_only=local_files_only),
        SamSegmenter(local_files_only=local_files_only),
    )


__all__ = ["BlipCaptioner", "GroundingDinoGrounder", "SamSegmenter", "real_backends"]
