use super::{Activity, Robot, StepCtx};
use crate::bus::TaskType;
use crate::log::WorldEvent;

/// Sweep the spiral, scanning the whole swath covered this tick, and put
/// every newly found site up for excavation. Scouting never pauses.
pub(super) fn step(robot: &mut Robot, ctx: &mut StepCtx<'_>) {
    if robot.state.activity != Activity::Searching {
        return;
    }
    let (swept, arrived) = robot.advance(ctx.config.timing.robot_speed);
    let found = ctx.world.discover_along(&swept, ctx.config.scan_radius);
    for site in found {
        let location = ctx.world.site(site).expect("just discovered").location;
        ctx.event(WorldEvent::Discovered { scout: robot.state.name.clone(), site, location });
        let announcement = robot
            .house
            .open_auction(&robot.state.name, TaskType::Excavate, location, ctx.tick)
            .expect("each site is announced once");
        ctx.publish(announcement);
    }
    if arrived {
        robot.set_activity(Activity::Done);
        ctx.event(WorldEvent::ScoutDone { scout: robot.state.name.clone(), cells: robot.visited_cells() });
    }
}
