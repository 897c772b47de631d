"""Smoke test for the camworld_py extension module.

Build and install first:
    pip install maturin
    (cd crates/py && maturin build --release -o /tmp/wheels)
    pip install /tmp/wheels/camworld_py-*.whl
"""

import math

import camworld_py as cw


def close(a, b, tol=1e-9):
    return abs(a - b) <= tol


def main():
    model = cw.BodyModel.toy()
    assert model.joint_count == 8
    params = cw.BodyParams.zeros(model.joint_count)
    verts, joints = model.forward(params)
    assert len(verts) == model.vertex_count and len(joints) == 8

    r = cw.rotation_from_euler(0.3)
    assert close(r[1][1], math.cos(0.3)) and close(r[1][2], -math.sin(0.3))

    enc = cw.bbox_encode(100, -50, 300, 1920, 1080)
    assert all(abs(a - b) < 1e-5 for a, b in zip(enc, (0.04540, -0.02270, 0.13618)))

    pitch = math.radians(20)
    body = cw.BodyParams([[0.0, 0.4, 0.0]] + [[0.1, 0.0, -0.1]] * 7, translation=[0.0, 0.0, 0.0])
    back = cw.world_to_camera(cw.camera_to_world(body, pitch), pitch)
    assert all(close(a, b) for p, q in zip(back.pose, body.pose) for a, b in zip(p, q))

    _, world_joints = model.forward(body)
    kps = cw.project(world_joints, 800.0, 640, 480, pitch, [0.0, 0.0, -4.0])
    est, t_b = cw.estimate_pitch(world_joints, kps, 800.0, 640, 480)
    assert abs(math.degrees(est - pitch)) < 0.5, est

    rotated = cw.world_to_camera(body, pitch)
    cam = cw.BodyParams(rotated.pose, rotated.shape, [0.0, 0.0, 4.0])
    fitted, loss, iters, converged = cw.adjust_mesh(
        model, cam, pitch, [0.0, 0.0, -4.0], kps, 800.0, 640, 480,
        joints3d=world_joints, pose=body.pose,
    )
    _, fitted_joints = model.forward(fitted)
    assert cw.w_mpjpe(fitted_joints, world_joints) < 1e-3, loss

    w, h, depth = cw.render_depth(model, body, 200.0, 64, 48, pitch, [0.0, 0.0, -4.0])
    assert w * h == len(depth) and any(math.isfinite(d) for d in depth)

    grid, blocks = cw.apply_block_mask([1.0] * 256 * 256, 0.2, 7)
    assert len(blocks) == 51 and sum(math.isinf(v) for v in grid) == 51 * 256

    assert close(cw.mpjpe([[0.0, 0.0, 0.0]], [[0.003, 0.0, 0.004]]), 5.0)
    assert close(cw.loss_mix([[0.1, 0, 0]] + [[0, 0, 0]] * 7, [[0, 0, 0]] * 8), 0.03)
    assert cw.BodyParams.from_json(body.to_json()).pose == body.pose
    print("camworld_py smoke test passed")


if __name__ == "__main__":
    main()
