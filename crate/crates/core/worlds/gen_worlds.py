"""Regenerates the bundled *.world.json fixtures. Run from this directory."""
import json


def rect(x0, y0, x1, y1):
    return {"exterior": [[x0, y0], [x1, y0], [x1, y1], [x0, y1]]}


CAR_TABLES = {
    "CarModel": {
        "models": {"map": {
            "sedan": {"width": 1.8, "height": 4.6},
            "hatchback": {"width": 1.75, "height": 4.1},
            "suv": {"width": 2.0, "height": 4.9},
            "compact": {"width": 1.7, "height": 3.8},
            "van": {"width": 2.0, "height": 5.2},
            "DOMINATOR": {"width": 1.9, "height": 4.7},
        }},
        "defaultModel": {"uniform_over": "models"},
    },
    "CarColor": {
        "colors": {"map": {
            "white": [0.95, 0.95, 0.95],
            "black": [0.05, 0.05, 0.05],
            "silver": [0.75, 0.75, 0.75],
            "red": [0.8, 0.1, 0.1],
            "blue": [0.1, 0.2, 0.7],
        }},
        "defaultColor": {"discrete_over": "colors",
                         "weights": {"white": 30, "black": 25, "silver": 25, "red": 10, "blue": 10}},
        "byteToReal": {"scale_list": 1 / 255},
    },
}


def driving(name, road_cells, curb_cells=(), extra=None):
    polys, road_names, curb_names = {}, [], []
    road_field, curb_field = [], []
    for i, (r, h) in enumerate(road_cells):
        n = f"road{i}"
        polys[n] = rect(*r)
        road_names.append(n)
        road_field.append({"polygon": n, "heading_deg": h})
    for i, (r, h) in enumerate(curb_cells):
        n = f"curb{i}"
        polys[n] = rect(*r)
        curb_names.append(n)
        curb_field.append({"polygon": n, "heading_deg": h})
    fields = {"roadDirection": {"cells": road_field, "default_deg": 0}}
    regions = {"road": {"polygons": road_names, "orientation": "roadDirection"}}
    if curb_cells:
        fields["curbDirection"] = {"cells": curb_field, "default_deg": 0}
        regions["curb"] = {"polygons": curb_names, "orientation": "curbDirection"}
    else:
        regions["curb"] = {"polygons": []}
    w = {
        "schema": 1,
        "name": name,
        "polygons": polys,
        "workspace": road_names + curb_names,
        "regions": regions,
        "fields": fields,
        "tables": CAR_TABLES,
        "prelude": ["import common"],
    }
    if extra:
        extra(w)
    return w


def tworoads():
    half, lane, curb, length = 10.5, 3.5, 0.5, 150.0
    road = []
    for k in range(6):
        x0 = -half + k * lane
        road.append(((x0, -length, x0 + lane, length), 180 if x0 < 0 else 0))
    for (xa, xb) in ((-length, -half), (half, length)):
        for k in range(6):
            y0 = -half + k * lane
            road.append(((xa, y0, xb, y0 + lane), -90 if y0 < 0 else 90))
    c = half + curb
    curbs = [
        ((half, half, c, length), 0), ((half, -length, c, -half), 0),
        ((-c, half, -half, length), 180), ((-c, -length, -half, -half), 180),
        ((c, half, length, c), 90), ((-length, half, -c, c), 90),
        ((c, -c, length, -half), -90), ((-length, -c, -c, -half), -90),
    ]
    return driving("tworoads", road, curbs)


def mars():
    return {
        "schema": 1,
        "name": "mars",
        "polygons": {"ground": rect(-2.5, -2.75, 2.5, 2.75)},
        "workspace": ["ground"],
    }


def open_world():
    return driving("open", [((-500, -500, 500, 500), 0)])


def heading2():
    return driving("heading2", [((0, -40, 4, 40), 0), ((-4, 20, 0, 40), 180)])


def strip():
    return driving("strip", [((0, 0, 20, 20), 0), ((20, 8, 120, 11), -90)])


def bumper():
    cells = [((k * 3.5, 0, (k + 1) * 3.5, 100), 0) for k in range(4)]
    cells += [((x, 0, x + 3, 300), 0) for x in (80, 150, 220, 290, 360)]
    return driving("bumper", cells)


for name, fn in [("tworoads", tworoads), ("mars", mars), ("open", open_world),
                 ("heading2", heading2), ("strip", strip), ("bumper", bumper)]:
    with open(f"{name}.world.json", "w") as f:
        json.dump(fn(), f, indent=1)
        f.write("\n")
