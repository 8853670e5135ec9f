//! A deterministic 2D tabletop world used for procedural dataset generation
//! and as the toy control environment.
//!
//! The world lives in the unit square. A circular effector moves colored
//! blocks; a block within grab range sticks to the effector and is carried.
//! Two fixed affine cameras rasterize the scene into square RGB frames, so
//! every demonstration comes as a synchronized two-view sequence.

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const EFFECTOR_RADIUS: f64 = 0.045;
pub const BLOCK_SIZE: f64 = 0.13;
pub const GRAB_RADIUS: f64 = 0.09;
/// Commanded speed below which the gripper engages; fast pass-bys near a
/// block must not pick it up.
pub const GRAB_SPEED: f64 = MAX_SPEED / 2.0;
pub const MAX_SPEED: f64 = 0.06;
/// A task goal is met when the relevant block is within this distance.
pub const GOAL_EPS: f64 = 0.05;

pub const PALETTE: [([f32; 3], &str); 5] = [
    ([220.0, 60.0, 50.0], "red"),
    ([60.0, 170.0, 70.0], "green"),
    ([60.0, 90.0, 220.0], "blue"),
    ([230.0, 200.0, 60.0], "yellow"),
    ([200.0, 70.0, 200.0], "magenta"),
];

/// The scripted manipulation tasks the generator knows how to demonstrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    /// Move block 0 onto block 1.
    Stack,
    /// Move the block matching the zone color into the zone.
    ColorPush,
    /// Move the block matching the base block's color onto the base block.
    /// Held-out composition of the color-selection and stacking skills.
    ColorStack,
    /// Move the blocker block away, then stack block 0 onto block 1.
    SeparateStack,
}

impl TaskKind {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "stack" => Some(Self::Stack),
            "color_push" => Some(Self::ColorPush),
            "color_stack" => Some(Self::ColorStack),
            "separate_stack" => Some(Self::SeparateStack),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Stack => "stack",
            Self::ColorPush => "color_push",
            Self::ColorStack => "color_stack",
            Self::SeparateStack => "separate_stack",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub pos: [f64; 2],
    pub color: [f32; 3],
}

/// Full simulator state; rendering is a pure function of this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub effector: [f64; 2],
    pub blocks: Vec<Block>,
    /// Index of the block currently carried by the effector, if any.
    pub attached: Option<usize>,
    /// Colored target zone (center, color) for push-style tasks.
    pub zone: Option<([f64; 2], [f32; 3])>,
}

impl WorldState {
    /// Flat numeric encoding: effector (2) + block positions (2 each).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.effector[0], self.effector[1]];
        for b in &self.blocks {
            v.push(b.pos[0]);
            v.push(b.pos[1]);
        }
        v
    }
}

/// One physics step: clamp the commanded velocity, move the effector, carry
/// the attached block. A free block in grab range attaches only while the
/// commanded speed is below `GRAB_SPEED` (a deliberate slow approach), so
/// full-speed transits past a block leave it in place.
pub fn step(state: &mut WorldState, action: [f64; 2]) {
    let vx = action[0].clamp(-MAX_SPEED, MAX_SPEED);
    let vy = action[1].clamp(-MAX_SPEED, MAX_SPEED);
    state.effector[0] = (state.effector[0] + vx).clamp(0.0, 1.0);
    state.effector[1] = (state.effector[1] + vy).clamp(0.0, 1.0);
    if let Some(i) = state.attached {
        state.blocks[i].pos = state.effector;
    } else if (vx * vx + vy * vy).sqrt() < GRAB_SPEED {
        let mut best: Option<(usize, f64)> = None;
        for (i, b) in state.blocks.iter().enumerate() {
            let d = dist(b.pos, state.effector);
            if d < GRAB_RADIUS && best.map_or(true, |(_, bd)| d < bd) {
                best = Some((i, d));
            }
        }
        if let Some((i, _)) = best {
            state.attached = Some(i);
            state.blocks[i].pos = state.effector;
        }
    }
}

pub fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Task-specific description of what the scripted demonstrator must do.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub initial: WorldState,
    /// Index of the block that must end up at `target`.
    pub payload_block: usize,
    pub target: [f64; 2],
    /// For separate_stack: the blocker moved out of the way first.
    pub blocker: Option<(usize, [f64; 2])>,
}

impl TaskInstance {
    pub fn goal_reached(&self, state: &WorldState) -> bool {
        dist(state.blocks[self.payload_block].pos, self.target) < GOAL_EPS
    }
}

fn random_pos<R: Rng>(rng: &mut R, margin: f64) -> [f64; 2] {
    [
        rng.gen_range(margin..1.0 - margin),
        rng.gen_range(margin..1.0 - margin),
    ]
}

/// A point at distance `lo..hi` from `anchor`, clamped into the arena. Used
/// to spawn the effector next to the block it will pick up, keeping scripted
/// demonstrations monotone in task progress (no long approach detour).
fn near_pos<R: Rng>(rng: &mut R, anchor: [f64; 2], lo: f64, hi: f64) -> [f64; 2] {
    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
    let r = rng.gen_range(lo..hi);
    [
        (anchor[0] + r * ang.cos()).clamp(0.08, 0.92),
        (anchor[1] + r * ang.sin()).clamp(0.08, 0.92),
    ]
}

fn far_pos<R: Rng>(rng: &mut R, others: &[[f64; 2]], min_d: f64) -> [f64; 2] {
    for _ in 0..200 {
        let p = random_pos(rng, 0.15);
        if others.iter().all(|o| dist(p, *o) > min_d) {
            return p;
        }
    }
    random_pos(rng, 0.15)
}

/// Samples a randomized instance of the given task.
pub fn sample_task<R: Rng>(kind: TaskKind, rng: &mut R) -> TaskInstance {
    match kind {
        TaskKind::Stack => {
            let c0 = PALETTE[rng.gen_range(0..PALETTE.len())].0;
            let mut c1 = PALETTE[rng.gen_range(0..PALETTE.len())].0;
            while c1 == c0 {
                c1 = PALETTE[rng.gen_range(0..PALETTE.len())].0;
            }
            let p0 = random_pos(rng, 0.15);
            let p1 = far_pos(rng, &[p0], 0.35);
            let eff = near_pos(rng, p0, 0.12, 0.2);
            TaskInstance {
                kind,
                initial: WorldState {
                    effector: eff,
                    blocks: vec![Block { pos: p0, color: c0 }, Block { pos: p1, color: c1 }],
                    attached: None,
                    zone: None,
                },
                payload_block: 0,
                target: p1,
                blocker: None,
            }
        }
        TaskKind::ColorPush | TaskKind::ColorStack => {
            // three blocks of distinct colors; the payload matches the target color
            let mut idxs: Vec<usize> = (0..PALETTE.len()).collect();
            for i in (1..idxs.len()).rev() {
                let j = rng.gen_range(0..=i);
                idxs.swap(i, j);
            }
            let colors: Vec<[f32; 3]> = idxs[..3].iter().map(|&i| PALETTE[i].0).collect();
            let payload = rng.gen_range(0..3usize);
            let p0 = random_pos(rng, 0.15);
            let p1 = far_pos(rng, &[p0], 0.3);
            let p2 = far_pos(rng, &[p0, p1], 0.3);
            let positions = [p0, p1, p2];
            let target = far_pos(rng, &[p0, p1, p2], 0.3);
            let eff = near_pos(rng, positions[payload], 0.12, 0.2);
            let blocks: Vec<Block> = positions
                .iter()
                .zip(colors.iter())
                .map(|(p, c)| Block { pos: *p, color: *c })
                .collect();
            let (blocks, zone, target) = match kind {
                TaskKind::ColorPush => (blocks, Some((target, colors[payload])), target),
                TaskKind::ColorStack => {
                    // base block shares the payload color and is the stack target
                    let mut blocks = blocks;
                    blocks.push(Block {
                        pos: target,
                        color: colors[payload],
                    });
                    (blocks, None, target)
                }
                _ => unreachable!(),
            };
            TaskInstance {
                kind,
                initial: WorldState {
                    effector: eff,
                    blocks,
                    attached: None,
                    zone,
                },
                payload_block: payload,
                target,
                blocker: None,
            }
        }
        TaskKind::SeparateStack => {
            let c0 = PALETTE[0].0;
            let c1 = PALETTE[2].0;
            let c2 = PALETTE[3].0;
            let p1 = random_pos(rng, 0.25);
            // blocker sits right next to the stack target
            let blocker_pos = [
                (p1[0] + BLOCK_SIZE * 0.9).min(0.95),
                p1[1],
            ];
            let p0 = far_pos(rng, &[p1, blocker_pos], 0.35);
            let eff = far_pos(rng, &[p0, p1, blocker_pos], 0.2);
            let park = [0.08, 0.08];
            TaskInstance {
                kind,
                initial: WorldState {
                    effector: eff,
                    blocks: vec![
                        Block { pos: p0, color: c0 },
                        Block { pos: p1, color: c1 },
                        Block {
                            pos: blocker_pos,
                            color: c2,
                        },
                    ],
                    attached: None,
                    zone: None,
                },
                payload_block: 0,
                target: p1,
                blocker: Some((2, park)),
            }
        }
    }
}

/// Waypoint plan for the scripted effector: go to each goal in order; blocks
/// attach on contact, so approaching a block picks it up and subsequent
/// waypoints carry it.
pub fn scripted_plan(task: &TaskInstance, successful: bool, wrong_target: [f64; 2]) -> Vec<[f64; 2]> {
    let mut plan = Vec::new();
    if let Some((blocker, park)) = task.blocker {
        plan.push(task.initial.blocks[blocker].pos);
        plan.push(park);
        // detour so the payload is approached without re-grabbing the blocker
        plan.push([park[0] + 0.25, park[1] + 0.25]);
    }
    plan.push(task.initial.blocks[task.payload_block].pos);
    if successful {
        plan.push(task.target);
    } else {
        plan.push(wrong_target);
    }
    plan
}

/// Runs the scripted controller for `steps` physics steps, returning the
/// state trajectory (length `steps + 1`, including the initial state).
///
/// The controller releases nothing; it relies on reaching the payload last.
/// For unsuccessful runs it heads to `wrong_target` instead of the goal.
pub fn run_scripted(task: &TaskInstance, steps: usize, successful: bool, wrong_target: [f64; 2]) -> Vec<WorldState> {
    let plan = scripted_plan(task, successful, wrong_target);
    let mut state = task.initial.clone();
    let mut traj = vec![state.clone()];
    let mut wp = 0usize;
    for _ in 0..steps {
        let action = if wp < plan.len() {
            let goal = plan[wp];
            let dx = goal[0] - state.effector[0];
            let dy = goal[1] - state.effector[1];
            let d = (dx * dx + dy * dy).sqrt();
            if d < 0.01 {
                wp += 1;
                [0.0, 0.0]
            } else {
                let s = (MAX_SPEED / d).min(1.0);
                [dx * s, dy * s]
            }
        } else {
            [0.0, 0.0]
        };
        // a grabbed blocker must be dropped at its park position
        step(&mut state, action);
        if let Some((blocker, park)) = task.blocker {
            if state.attached == Some(blocker) && dist(state.effector, park) < 0.02 {
                state.attached = None;
            }
        }
        traj.push(state.clone());
    }
    traj
}

// ---------------------------------------------------------------------------
// Rendering

/// Fixed affine camera: image_xy = scale * R * world_xy + offset.
#[derive(Debug, Clone, Copy)]
pub struct Camera {
    pub rot: [[f64; 2]; 2],
    pub offset: [f64; 2],
    pub scale: f64,
    pub background: [f32; 3],
}

/// The two fixed viewpoints. View 1 observes the scene rotated and mirrored
/// with a different background so the views are visually distinct.
pub fn camera(view_id: u8) -> Camera {
    match view_id {
        0 => Camera {
            rot: [[1.0, 0.0], [0.0, 1.0]],
            offset: [0.0, 0.0],
            scale: 1.0,
            background: [235.0, 235.0, 228.0],
        },
        1 => Camera {
            // 90 degree rotation composed with a horizontal mirror
            rot: [[0.0, 1.0], [1.0, 0.0]],
            offset: [0.06, 0.06],
            scale: 0.88,
            background: [210.0, 218.0, 235.0],
        },
        _ => panic!("unknown view id {view_id}"),
    }
}

fn project(cam: &Camera, p: [f64; 2]) -> [f64; 2] {
    [
        cam.scale * (cam.rot[0][0] * p[0] + cam.rot[0][1] * p[1]) + cam.offset[0],
        cam.scale * (cam.rot[1][0] * p[0] + cam.rot[1][1] * p[1]) + cam.offset[1],
    ]
}

fn fill_rect(img: &mut Array3<f32>, size: usize, center: [f64; 2], half: f64, color: [f32; 3]) {
    let lo_x = ((center[0] - half) * size as f64).floor().max(0.0) as usize;
    let hi_x = (((center[0] + half) * size as f64).ceil() as usize).min(size);
    let lo_y = ((center[1] - half) * size as f64).floor().max(0.0) as usize;
    let hi_y = (((center[1] + half) * size as f64).ceil() as usize).min(size);
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            for c in 0..3 {
                img[[y, x, c]] = color[c];
            }
        }
    }
}

fn fill_circle(img: &mut Array3<f32>, size: usize, center: [f64; 2], radius: f64, color: [f32; 3]) {
    let lo_x = ((center[0] - radius) * size as f64).floor().max(0.0) as usize;
    let hi_x = (((center[0] + radius) * size as f64).ceil() as usize).min(size);
    let lo_y = ((center[1] - radius) * size as f64).floor().max(0.0) as usize;
    let hi_y = (((center[1] + radius) * size as f64).ceil() as usize).min(size);
    let r2 = radius * radius;
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            let px = (x as f64 + 0.5) / size as f64 - center[0];
            let py = (y as f64 + 0.5) / size as f64 - center[1];
            if px * px + py * py <= r2 {
                for c in 0..3 {
                    img[[y, x, c]] = color[c];
                }
            }
        }
    }
}

/// Rasterizes the state from one camera into an `size x size x 3` raw frame
/// (values in [0, 255]). Pure function of (state, view_id, size).
pub fn render(state: &WorldState, view_id: u8, size: usize) -> Array3<f32> {
    let cam = camera(view_id);
    let mut img = Array3::from_elem((size, size, 3), 0.0f32);
    for y in 0..size {
        for x in 0..size {
            for c in 0..3 {
                img[[y, x, c]] = cam.background[c];
            }
        }
    }
    if let Some((zp, zc)) = state.zone {
        let p = project(&cam, zp);
        // zone drawn as a dimmed patch slightly larger than a block
        let dim = [zc[0] * 0.45 + 120.0, zc[1] * 0.45 + 120.0, zc[2] * 0.45 + 120.0];
        fill_rect(&mut img, size, p, BLOCK_SIZE * 0.85 * cam.scale, dim);
    }
    for b in &state.blocks {
        let p = project(&cam, b.pos);
        fill_rect(&mut img, size, p, BLOCK_SIZE * 0.5 * cam.scale, b.color);
    }
    let p = project(&cam, state.effector);
    fill_circle(&mut img, size, p, EFFECTOR_RADIUS * cam.scale, [40.0, 40.0, 45.0]);
    img
}
