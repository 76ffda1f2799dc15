use sagail_core::demogen::{analyze_coverage, generate_demos, DemoProfile};
use sagail_core::env::{EnvConfig, PointPush2D};

#[test]
fn pointpush_demos_replay_through_the_kinematics() {
    let env: EnvConfig = "pointpush2d".parse().unwrap();
    let EnvConfig::PointPush2D(params) = env else { unreachable!() };
    let data = generate_demos(&env, &DemoProfile::suboptimal(), 20, 4).unwrap();
    data.validate().unwrap();
    for t in &data.trajectories {
        for k in 0..t.horizon() {
            let s = t.state(k);
            let a = t.action(k);
            let (agent, object) = PointPush2D::kinematics(&params, [s[0], s[1]], [s[2], s[3]], [a[0], a[1]]);
            assert_eq!(t.state(k + 1), &[agent[0], agent[1], object[0], object[1]]);
            assert_eq!(t.achieved_goal(k + 1), &object);
        }
    }
}

#[test]
fn generation_is_seed_deterministic() {
    let env: EnvConfig = "planarrotate".parse().unwrap();
    let a = generate_demos(&env, &DemoProfile::suboptimal(), 15, 9).unwrap();
    let b = generate_demos(&env, &DemoProfile::suboptimal(), 15, 9).unwrap();
    let c = generate_demos(&env, &DemoProfile::suboptimal(), 15, 10).unwrap();
    assert_eq!(a, b);
    assert_ne!(a.trajectories, c.trajectories);
}

#[test]
fn suboptimal_profile_holds_less_than_optimal() {
    let env: EnvConfig = "planarrotate".parse().unwrap();
    let sub = analyze_coverage(&generate_demos(&env, &DemoProfile::suboptimal(), 60, 1).unwrap()).unwrap();
    let opt = analyze_coverage(&generate_demos(&env, &DemoProfile::optimal(), 60, 1).unwrap()).unwrap();
    assert!(sub.mean_hold_fraction < 0.4, "{}", sub.mean_hold_fraction);
    assert!(opt.mean_hold_fraction > 0.8, "{}", opt.mean_hold_fraction);
    assert!(sub.mean_goal_distance < opt.mean_goal_distance);
}
