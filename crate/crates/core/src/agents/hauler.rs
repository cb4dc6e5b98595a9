use super::{Activity, Robot, StepCtx, STANDBY_OFFSET};
use crate::bus::WinnerDecl;
use crate::log::WorldEvent;
use crate::world::Point;

pub(super) fn accept(robot: &mut Robot, win: &WinnerDecl, ctx: &mut StepCtx<'_>) -> bool {
    let Some(site) = ctx.world.site_at(&win.task_location) else {
        return false;
    };
    start_transport(robot, site, win.task_location, &win.auctioneer);
    true
}

fn start_transport(robot: &mut Robot, site: crate::world::SiteId, location: Point, excavator: &str) {
    robot.job.site = Some((site, location));
    robot.job.partner = Some(excavator.to_string());
    robot.head_to(location);
    robot.set_activity(Activity::ToSite);
}

/// Waiting spot near `site`, a short way toward the plant.
pub(crate) fn standby_pose(site: Point, plant: Point) -> Point {
    let gap = site.distance(&plant);
    if gap <= STANDBY_OFFSET {
        return plant;
    }
    site.lerp(&plant, STANDBY_OFFSET / gap)
}

pub(super) fn step(robot: &mut Robot, ctx: &mut StepCtx<'_>) {
    let tick = ctx.tick;
    let config = ctx.config;
    let timing = &config.timing;
    match robot.state.activity {
        Activity::Idle | Activity::Standby => {
            if let Some(job) = ctx.dispatch.remove(&robot.state.name) {
                start_transport(robot, job.site, job.location, &job.excavator);
                robot.advance(timing.robot_speed);
                return;
            }
            let parent_site = ctx
                .policy
                .parent_of(&robot.state.name)
                .and_then(|p| ctx.peers.get(p))
                .and_then(|p| p.site());
            match parent_site {
                Some((_, location)) => {
                    let spot = standby_pose(location, ctx.world.plant_location);
                    let heading = robot.travel.as_ref().map(|t| t.path().goal());
                    if robot.state.activity != Activity::Standby || heading != Some(spot) {
                        robot.head_to(spot);
                        robot.set_activity(Activity::Standby);
                    }
                    robot.advance(timing.robot_speed);
                }
                None if robot.state.activity == Activity::Standby => {
                    robot.advance(timing.robot_speed);
                }
                None => {}
            }
        }
        Activity::ToSite => {
            let (_, arrived) = robot.advance(timing.robot_speed);
            if arrived {
                robot.job.until = tick + timing.load_duration;
                robot.set_activity(Activity::Loading);
            }
        }
        Activity::Loading => {
            if tick < robot.job.until {
                return;
            }
            let (site, _) = robot.job.site.expect("loading at a site");
            assert!(robot.bin.is_none(), "{} already carries a mineral", robot.state.name);
            let mineral = ctx
                .world
                .load(site)
                .unwrap_or_else(|e| panic!("{} found nothing to load: {e}", robot.state.name));
            robot.bin = Some(mineral);
            robot.state.carried_minerals = 1;
            ctx.event(WorldEvent::Loaded {
                hauler: robot.state.name.clone(),
                excavator: robot.job.partner.clone().expect("serving an excavator"),
                site,
                mineral,
            });
            robot.head_to(ctx.world.plant_location);
            robot.set_activity(Activity::ToPlant);
        }
        Activity::ToPlant => {
            let (_, arrived) = robot.advance(timing.robot_speed);
            if arrived {
                robot.job.until = tick + timing.unload_duration;
                robot.set_activity(Activity::Unloading);
            }
        }
        Activity::Unloading => {
            if tick < robot.job.until {
                return;
            }
            let mineral = ctx
                .world
                .transfer_mineral_to_plant(&robot.state.pose, &mut robot.bin)
                .unwrap_or_else(|e| panic!("{} could not unload: {e}", robot.state.name));
            robot.state.carried_minerals = 0;
            ctx.event(WorldEvent::Unloaded { hauler: robot.state.name.clone(), mineral });
            robot.job = Default::default();
            robot.travel = None;
            robot.set_activity(Activity::Idle);
        }
        other => unreachable!("hauler in {other:?}"),
    }
}
