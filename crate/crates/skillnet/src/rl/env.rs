//! Gym-style wrapper around the block world for policy training.

use crate::dataio::Frame;
use crate::world::{self, TaskInstance, WorldState};

/// Episodic environment over one task instance. Actions are 2D effector
/// velocity commands; the simulator clamps them to its speed limit.
#[derive(Debug, Clone)]
pub struct ToyEnv {
    pub task: TaskInstance,
    pub state: WorldState,
    /// Steps taken since the last reset.
    pub t: usize,
    pub horizon: usize,
    pub frame_size: usize,
}

impl ToyEnv {
    pub fn new(task: TaskInstance, horizon: usize, frame_size: usize) -> Self {
        let state = task.initial.clone();
        Self {
            task,
            state,
            t: 0,
            horizon,
            frame_size,
        }
    }

    /// Back to the scripted initial state.
    pub fn reset(&mut self) -> &WorldState {
        self.state = self.task.initial.clone();
        self.t = 0;
        &self.state
    }

    /// Teleports to an arbitrary state (used for along-demonstration resets).
    pub fn reset_to(&mut self, state: WorldState) -> &WorldState {
        self.state = state;
        self.t = 0;
        &self.state
    }

    /// Advances one step; returns true when the episode is over (horizon
    /// exhausted or goal reached).
    pub fn step(&mut self, action: [f64; 2]) -> bool {
        world::step(&mut self.state, action);
        self.t += 1;
        self.t >= self.horizon || self.goal_reached()
    }

    pub fn goal_reached(&self) -> bool {
        self.task.goal_reached(&self.state)
    }

    /// Renders the current state from one camera, quantized exactly like the
    /// dataset generator so embeddings see the same pixel statistics.
    pub fn observe_frame(&self, view: u8) -> Frame {
        let raw = world::render(&self.state, view, self.frame_size);
        let quantized = raw.mapv(|x| x.round().clamp(0.0, 255.0) as u8);
        Frame::from_raw_u8(&quantized, self.t, view)
    }

    pub fn state_vec(&self) -> Vec<f64> {
        self.state.to_vec()
    }
}
