//! Assembly of the tractable stochastic optimal control problem.

/// Planner flavors compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ControllerVariant {
    Robust,
    ApproxJoint,
    ApproxStage,
    ApproxNode,
    TightJoint,
    TightStage,
    TightNode,
}

/// Placeholder configuration.
#[derive(Debug, Clone)]
pub struct OcpConfig {
    pub variant: ControllerVariant,
}
