use super::{Activity, Assignment, Robot, StepCtx};
use crate::bus::{TaskType, WinnerDecl};
use crate::log::WorldEvent;
use crate::policy::Dispatch;

/// Claims the site; a site someone else already holds is declined.
pub(super) fn accept(robot: &mut Robot, win: &WinnerDecl, ctx: &mut StepCtx<'_>) -> bool {
    let Some(site) = ctx.world.site_at(&win.task_location) else {
        return false;
    };
    if ctx.world.claim(site, &robot.state.name).is_err() {
        return false;
    }
    ctx.event(WorldEvent::Claimed { excavator: robot.state.name.clone(), site });
    robot.job.site = Some((site, win.task_location));
    robot.head_to(win.task_location);
    robot.set_activity(Activity::Traveling);
    true
}

pub(super) fn step(robot: &mut Robot, ctx: &mut StepCtx<'_>) {
    let tick = ctx.tick;
    match robot.state.activity {
        Activity::Idle => {}
        Activity::Traveling => {
            let (_, arrived) = robot.advance(ctx.config.timing.robot_speed);
            if !arrived {
                return;
            }
            let (site, _) = robot.job.site.expect("traveling to a site");
            if ctx.world.site(site).expect("known site").minerals_remaining == 0 {
                release(robot, ctx);
            } else {
                robot.job.until = tick + ctx.config.timing.dig_duration;
                robot.set_activity(Activity::Digging);
            }
        }
        Activity::Digging => {
            if tick < robot.job.until {
                return;
            }
            let (site, location) = robot.job.site.expect("digging at a site");
            let mineral = ctx.world.dig(site).expect("digging only starts with minerals left");
            let name = robot.state.name.clone();
            ctx.event(WorldEvent::Dug { excavator: name.clone(), site, mineral });
            let hauler_free = |h: &str| {
                !ctx.dispatch.contains_key(h)
                    && ctx.peers.get(h).is_some_and(|r| matches!(r.state.activity, Activity::Idle | Activity::Standby))
            };
            match ctx.policy.coalition_dispatch(&name, hauler_free) {
                Dispatch::Direct(hauler) => {
                    ctx.event(WorldEvent::Dispatched { excavator: name.clone(), hauler: hauler.clone(), site, mineral });
                    ctx.dispatch.insert(hauler, Assignment { excavator: name, site, location, mineral });
                }
                Dispatch::Auction => {
                    let announcement = robot
                        .house
                        .open_auction(&name, TaskType::Transport, location, tick)
                        .expect("one transport auction at a time per excavator");
                    ctx.publish(announcement);
                }
            }
            robot.set_activity(Activity::WaitingForHauler);
        }
        Activity::WaitingForHauler => {
            let (site, _) = robot.job.site.expect("waiting at a site");
            let s = ctx.world.site(site).expect("known site");
            if !s.awaiting_pickup.is_empty() {
                return;
            }
            if s.minerals_remaining > 0 {
                robot.job.until = tick + ctx.config.timing.dig_duration;
                robot.set_activity(Activity::Digging);
            } else {
                release(robot, ctx);
            }
        }
        other => unreachable!("excavator in {other:?}"),
    }
}

fn release(robot: &mut Robot, ctx: &mut StepCtx<'_>) {
    let (site, _) = robot.job.site.take().expect("holding a site");
    ctx.world.release(site, &robot.state.name).expect("claimant releases");
    ctx.event(WorldEvent::Released { excavator: robot.state.name.clone(), site });
    robot.travel = None;
    robot.set_activity(Activity::Idle);
}
