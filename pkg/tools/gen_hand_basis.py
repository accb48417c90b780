"""Regenerate src/signfit/data/anatomical_hand_basis.json.

The basis restricts each finger to its anatomical degrees of freedom: base
joint flexion + abduction, and hinge-only flexion for the two outer joints
(4 coefficients per finger, 20 per hand). Axis conventions follow the default
skeleton: flexion is the local z component, abduction the local y component.
"""

import json
import os

FLEX = 2  # z
ABD = 1  # y


def build():
    rows = []
    names = []
    for finger, fname in enumerate(("thumb", "index", "middle", "ring", "pinky")):
        base, mid, tip = 3 * finger, 3 * finger + 1, 3 * finger + 2
        for label, joint, comp in (
            ("base_flex", base, FLEX),
            ("base_abduction", base, ABD),
            ("mid_flex", mid, FLEX),
            ("tip_flex", tip, FLEX),
        ):
            row = [0.0] * 45
            row[3 * joint + comp] = 1.0
            rows.append(row)
            names.append(f"{fname}_{label}")
    return {
        "comment": "Anatomical hand-pose basis: 4 degrees of freedom per finger "
        "(base flexion/abduction, hinged mid and tip flexion). Out-of-plane "
        "motion of the outer joints is unrepresentable, which suppresses "
        "depth-flip impostor poses in monocular fitting.",
        "coefficient_names": names,
        "mean": [0.0] * 45,
        "basis": rows,
    }


if __name__ == "__main__":
    out = os.path.join(
        os.path.dirname(__file__), "..", "src", "signfit", "data", "anatomical_hand_basis.json"
    )
    with open(out, "w", encoding="utf-8") as fh:
        json.dump(build(), fh, indent=1)
        fh.write("\n")
    print(f"wrote {os.path.normpath(out)}: {len(build()['basis'])} coefficients")
