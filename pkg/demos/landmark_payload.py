"""What a vertex-to-map detection hands to verification.

Replays a small synthetic world in vertex-to-map mode and, for the first
few accepted queries, lists the best vertex, the covisible vertices that
passed ``alpha_map`` and the size of the landmark set they contribute.

    python demos/landmark_payload.py
"""
from probvote.calibration import calibrate
from probvote.dataset import DatasetBundle
from probvote.index import IndexConfig
from probvote.pipeline import replay
from probvote.scoring import score_all
from probvote.synth import synth_generate
from probvote.voting import DetectorConfig


def main():
    world = synth_generate(seed=3, n_places=80, revisit_plan=((20, 15),), sigma=0.2)
    bundle = DatasetBundle.from_world(world)
    model = calibrate(bundle, index_cfg=IndexConfig(codebook_size=16), percentile=95.0)
    print(f"theta (95th percentile of self-match distances): {model.theta:.3f}")

    cfg = DetectorConfig(mode="v2m", alpha=1e-3, alpha_map=1e-2, verify=True, min_matches=8)
    report = replay(bundle, model, cfg)
    shown = 0
    for s in report.steps:
        if not s.accepted:
            continue
        c = s.candidate
        truth = world.revisit_of.get(s.query)
        ver = "verified" if s.verified else "rejected"
        print(f"query {s.query:3d}: best {c.vertex:3d} (first visit {truth}), "
              f"-log10 pmf {c.neg_log_score:7.2f}, {len(c.landmarks):4d} landmarks, {ver}")
        shown += 1
        if shown == 8:
            break
    print(f"{sum(s.accepted for s in report.steps)} accepted, {sum(s.verified for s in report.steps)} verified")


if __name__ == "__main__":
    main()
