#!/usr/bin/env python3
"""Regenerates the nominal quadruped template files under templates/.

Two generic platforms: "small" (~12.7 kg, 0.2 m thigh/calf) and "large"
(~21 kg, 0.25 m thigh/calf). Link inertias are uniform-box values about the
COM; thigh/calf boxes span z in [-l_z, 0] of their frame with the COM at the
geometric center.
"""

import json
import math
import os

LEGS = [("FL", +1, +1), ("FR", +1, -1), ("HL", -1, +1), ("HR", -1, -1)]


def box_inertia(m, d):
    lx, ly, lz = d
    return [
        m * (ly * ly + lz * lz) / 12.0, 0.0, 0.0,
        0.0, m * (lx * lx + lz * lz) / 12.0, 0.0,
        0.0, 0.0, m * (lx * lx + ly * ly) / 12.0,
    ]


def link(name, type_, dims, mass, com):
    return {
        "name": name,
        "type": type_,
        "dims_m": list(dims),
        "mass_kg": mass,
        "inertia_kgm2": box_inertia(mass, dims),
        "com_offset_m": list(com),
    }


def make(spec):
    links = [link("base", "base", spec["base_dims"], spec["base_mass"], (0.0, 0.0, 0.0))]
    joints = []
    for li, (leg, fx, sy) in enumerate(LEGS):
        hip_i, thigh_i, calf_i = 1 + 3 * li, 2 + 3 * li, 3 + 3 * li
        links.append(link(f"{leg}_hip", "hip", spec["hip_dims"], spec["hip_mass"],
                          (0.0, sy * spec["hip_offset"] / 2.0, 0.0)))
        links.append(link(f"{leg}_thigh", "thigh", spec["thigh_dims"], spec["thigh_mass"],
                          (0.0, 0.0, -spec["thigh_dims"][2] / 2.0)))
        links.append(link(f"{leg}_calf", "calf", spec["calf_dims"], spec["calf_mass"],
                          (0.0, 0.0, -spec["calf_dims"][2] / 2.0)))
        joints.append({
            "name": f"{leg}_hip_abduction", "parent": 0, "child": hip_i,
            "axis": [1.0, 0.0, 0.0],
            "origin_in_parent_m": [fx * spec["base_dims"][0] / 2.0,
                                   sy * spec["base_dims"][1] / 2.0, 0.0],
            "pos_limits_rad": [-0.86, 0.86],
            "vel_limit_rad_per_s": spec["vel_limit"],
            "torque_limit_Nm": spec["torque_limit"],
        })
        joints.append({
            "name": f"{leg}_hip_extension", "parent": hip_i, "child": thigh_i,
            "axis": [0.0, 1.0, 0.0],
            "origin_in_parent_m": [0.0, sy * spec["hip_offset"], 0.0],
            "pos_limits_rad": [-1.0, 3.5],
            "vel_limit_rad_per_s": spec["vel_limit"],
            "torque_limit_Nm": spec["torque_limit"],
        })
        joints.append({
            "name": f"{leg}_knee", "parent": thigh_i, "child": calf_i,
            "axis": [0.0, 1.0, 0.0],
            "origin_in_parent_m": [0.0, 0.0, -spec["thigh_dims"][2]],
            "pos_limits_rad": [-2.7, -0.3],
            "vel_limit_rad_per_s": spec["vel_limit"],
            "torque_limit_Nm": spec["torque_limit"],
        })
    # Nominal crouch at extension ratio 0.85 (equal thigh/calf lengths).
    knee = -2.0 * math.acos(0.85)
    thigh = math.acos(0.85)
    pose = [0.0, thigh, knee] * 4
    return {"id": spec["id"], "version": 1, "links": links, "joints": joints,
            "nominal_pose": pose}


SMALL = {
    "id": "small",
    "base_dims": (0.38, 0.094, 0.11), "base_mass": 6.0,
    "hip_dims": (0.09, 0.08, 0.09), "hip_mass": 0.6, "hip_offset": 0.08,
    "thigh_dims": (0.045, 0.04, 0.2), "thigh_mass": 0.9,
    "calf_dims": (0.03, 0.03, 0.2), "calf_mass": 0.18,
    "vel_limit": 21.0, "torque_limit": 33.5,
}

LARGE = {
    "id": "large",
    "base_dims": (0.5, 0.13, 0.13), "base_mass": 10.0,
    "hip_dims": (0.11, 0.10, 0.11), "hip_mass": 1.0, "hip_offset": 0.095,
    "thigh_dims": (0.055, 0.05, 0.25), "thigh_mass": 1.4,
    "calf_dims": (0.038, 0.038, 0.25), "calf_mass": 0.35,
    "vel_limit": 20.0, "torque_limit": 44.0,
}

if __name__ == "__main__":
    out_dir = os.path.join(os.path.dirname(__file__), "..", "templates")
    os.makedirs(out_dir, exist_ok=True)
    for spec in (SMALL, LARGE):
        path = os.path.join(out_dir, spec["id"] + ".json")
        with open(path, "w") as f:
            json.dump(make(spec), f, indent=2)
            f.write("\n")
        print("wrote", path)
