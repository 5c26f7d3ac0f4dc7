"""
Paired plate/vehicle annotations
================================

Label files list a plate (class 0) followed by its vehicle (class 1), in
YOLO's normalized ``class cx cy w h`` layout. Build a synthetic corpus,
summarize it and look at what the parser rejects.
"""

# %%
from icrloss.annotations import (
    LabelFormatError,
    SyntheticSpec,
    compute_stats,
    generate_synthetic,
    parse_label_file,
    serialize_label_file,
)

images = generate_synthetic(
    SyntheticSpec(n_images=300, plates_per_image=(1, 6), violation_rate=0.05, seed=0)
)
print(compute_stats(images).format_table())

# %%
# One file as it would appear on disk.
print(serialize_label_file(images[0]))

# %%
# Malformed files fail with the offending line number.
for text in [
    "0 .5 .5 .05 .02\n1 .5 .55 .4 .3\n0 .2 .2 .01 .01\n",
    "1 .5 .55 .4 .3\n0 .5 .5 .05 .02\n",
    "0 .5 .5 .05 .02\n1 .5 1.55 .4 .3\n",
]:
    try:
        parse_label_file(text, (1920, 1080))
    except LabelFormatError as exc:
        print("rejected:", exc)
