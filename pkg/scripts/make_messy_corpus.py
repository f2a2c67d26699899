#!/usr/bin/env python
"""Write the 50-message corpus of messy vision-model outputs.

Each entry holds the raw text a model might return and the answers a careful
human reader would take from it (``null`` where no answer can be read: a
refusal and an output cut off mid-JSON). The styles mimic what small local
vision models tend to produce: bare JSON, JSON in fences or wrapped in
chatter, aliased or nested keys, markdown key-value lists, numbered lists and
free prose.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

Y, N = True, False

CORPUS: list[tuple[str, tuple | None]] = [
    # --- bare / lightly decorated JSON
    ('{"q1":"no","q2":"no","q3":"no","q4":"yes"}', (N, N, N, Y)),
    ('{"q1": "Yes", "q2": "No", "q3": "No", "q4": "No"}', (Y, N, N, N)),
    ('{"q1": true, "q2": false, "q3": true, "q4": false}', (Y, N, Y, N)),
    ('{ "q1": "NO", "q2": "YES", "q3": "NO", "q4": "NO" }\n', (N, Y, N, N)),
    ('{"question_1": "no", "question_2": "no", "question_3": "yes", "question_4": "yes"}', (N, N, Y, Y)),
    ('{"answers": {"q1": "no", "q2": "yes", "q3": "no", "q4": "yes"}}', (N, Y, N, Y)),
    ('{"1": "no", "2": "no", "3": "no", "4": "no"}', (N, N, N, N)),
    ('{"Q1": "Yes - the route crosses the lake on a bridge", "Q2": "No", "Q3": "No", "Q4": "Yes, it skirts the park"}', (Y, N, N, Y)),
    ('{"q1": {"answer": "no", "reason": "no blue areas touch the red line"}, "q2": {"answer": "no"}, '
     '"q3": {"answer": "no"}, "q4": {"answer": "yes", "reason": "green patch"}}', (N, N, N, Y)),
    ('{"q1": "y", "q2": "n", "q3": "n", "q4": "n"}', (Y, N, N, N)),
    # --- fenced JSON
    ('```json\n{"q1":"no","q2":"no","q3":"no","q4":"yes"}\n```', (N, N, N, Y)),
    ('```\n{"q1": "no", "q2": "yes", "q3": "no", "q4": "no"}\n```', (N, Y, N, N)),
    ('Sure! Here is my analysis of the map.\n\n```json\n{\n  "q1": "yes",\n  "q2": "no",\n  "q3": "no",\n  "q4": "no"\n}\n```\n\n'
     'The route crosses the blue water area in the upper half.', (Y, N, N, N)),
    ('```JSON\n{"q1": "No", "q2": "No", "q3": "Yes", "q4": "No"}\n```\nLet me know if you need anything else!', (N, N, Y, N)),
    ('Based on the image:\n```json\n{"q1": "no", "q2": "no", "q3": "no", "q4": "no"}\n```', (N, N, N, N)),
    # --- JSON inside chatter, no fences
    ('After examining the route carefully, my answers are {"q1": "no", "q2": "yes", "q3": "yes", "q4": "no"}. '
     'The railway is the grey hatched line.', (N, Y, Y, N)),
    ('Answer: {"q1": "yes", "q2": "yes", "q3": "no", "q4": "yes"}', (Y, Y, N, Y)),
    ('The output in the requested format is:\n{"q1": "no", "q2": "no", "q3": "yes", "q4": "yes"}\nHope this helps.', (N, N, Y, Y)),
    # --- markdown key-value
    ('q1: yes\nq2: no\nq3: no\nq4: no', (Y, N, N, N)),
    ('**Q1:** No\n**Q2:** No\n**Q3:** No\n**Q4:** Yes', (N, N, N, Y)),
    ('- Q1 (water): **No**\n- Q2 (railway): **Yes**\n- Q3 (pedestrian): **No**\n- Q4 (park/forest): **No**', (N, Y, N, N)),
    ('Question 1: Yes, the route crosses a canal.\nQuestion 2: No.\nQuestion 3: No.\nQuestion 4: No.', (Y, N, N, N)),
    ('Q1 = no\nQ2 = no\nQ3 = yes\nQ4 = no', (N, N, Y, N)),
    ('Q1 - No\nQ2 - No\nQ3 - No\nQ4 - No\n\nThe route stays on regular roads throughout.', (N, N, N, N)),
    ('Here are the answers:\n\nq1: "no"\nq2: "no"\nq3: "no"\nq4: "yes"', (N, N, N, Y)),
    ('| Question | Answer |\n|---|---|\n| q1 | no |\n| q2 | yes |\n| q3 | no |\n| q4 | no |', (N, Y, N, N)),
    ('Q1: TRUE\nQ2: FALSE\nQ3: FALSE\nQ4: TRUE', (Y, N, N, Y)),
    # --- numbered lists with explanations (no q-prefix)
    ('1. No, the route does not cross any water body.\n2. No, there is no railway line along the route.\n'
     '3. No, it does not pass through a pedestrian area.\n4. Yes, the route passes through a park.', (N, N, N, Y)),
    ('1. Yes - the red line goes over the lake.\n2. No railway is crossed.\n3. No pedestrian zone is visible on the path.\n'
     '4. No park or forest along the way.', (Y, N, N, N)),
    ('1) Water: the route crosses the canal near the bottom.\n2) Railway: yes, it crosses the tracks once.\n'
     '3) Pedestrian: none.\n4) Park/forest: none.', (Y, Y, N, N)),
    # --- free prose (needs the extraction model)
    ('The route crosses a river near the start. No railway is crossed. It does not pass through a pedestrian area. '
     'There is no park along the route.', (Y, N, N, N)),
    ('Looking at the map, the red route stays on the road network. It does not cross any water. '
     'It crosses the railway line in the middle. There are no pedestrian zones. It does not enter a park or forest.', (N, Y, N, N)),
    ('The path goes straight through the park, which is the large green area. Water bodies are not touched. '
     'No railway tracks are crossed. The pedestrian plaza is avoided.', (N, N, N, Y)),
    ("I can see the route clearly. It doesn't cross any lake or river. It doesn't cross the railway either. "
     "It does pass through a pedestrian plaza near the end. It also runs past a garden.", (N, N, Y, Y)),
    ('The route is mostly on main roads. There is a lake to the west but the route never crosses water. '
     'No train tracks are crossed. No pedestrian areas. No parks.', (N, N, N, N)),
    ('Yes, the route crosses a water body (the canal). Yes, it also crosses the railway line. '
     'It does not traverse a pedestrian area. It does not pass through a park or forest.', (Y, Y, N, N)),
    ('This delivery route passes through a forest patch in the southwest. It does not cross water. '
     'It is clear of railway lines. The walkway area is not entered.', (N, N, N, Y)),
    ('There is a railway crossing on the route. The route crosses a pond. It passes through a pedestrian street. '
     'It passes through a park as well.', (Y, Y, Y, Y)),
    ('The route avoids water entirely. A level crossing over the train line is visible. '
     'No sidewalk-only zones are crossed. Trees of a wooded area line the route.', (N, Y, N, Y)),
    ('The red line crosses the blue lake area on a bridge. There is no railway. It does not go through any '
     'pedestrian-only plaza. It does not go through green space.', (Y, N, N, N)),
    ('No water crossings. No rail crossings. No pedestrian zones. No parks or forests. The route looks fine.', (N, N, N, N)),
    ('Analysis:\nWater - the route does not touch any water.\nRailway - the route crosses the track twice.\n'
     'Pedestrian - the route passes through a plaza.\nPark - none.', (N, Y, Y, N)),
    ('The route goes through a park in the centre of the image. It never crosses a river or lake. '
     'It stays clear of the railway. There is no pedestrian zone along the path.', (N, N, N, Y)),
    ('Water: yes (canal near the depot)\nRailway: no\nPedestrian: no\nPark: no', (Y, N, N, N)),
    ('It crosses the stream once. The rail line is far away and is not crossed. '
     'It goes through the footway area near the plaza. It does not cross any park.', (Y, N, Y, N)),
    ('The route does not cross any water body, does not cross a railway, and does not pass through pedestrian areas. '
     'It does cut through the corner of a forest.', (N, N, N, Y)),
    ('Yes the route crosses water. Railway: not crossed. Pedestrian area: not crossed. Park: crossed.', (Y, N, N, Y)),
    ('From the image, the route does not go near water. It does not cross the train tracks. '
     'There is a promenade it passes through. No parks are visible near it.', (N, N, Y, N)),
    # --- unreadable
    ("I'm sorry, but I can't help with analyzing this image.", None),
    ('{"q1": "no", "q2": "no", "q3":', None),
]


def main(out: Path) -> None:
    keys = ("q1", "q2", "q3", "q4")
    rows = []
    for i, (text, exp) in enumerate(CORPUS):
        rows.append({"id": f"messy{i:02d}", "text": text, "expected": None if exp is None else dict(zip(keys, exp))})
    assert len(rows) == 50, len(rows)
    out.write_text("".join(json.dumps(r) + "\n" for r in rows))
    print(f"wrote {len(rows)} messages to {out}")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "src/routeaudit/data/messy_outputs.jsonl")
