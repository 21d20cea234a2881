"""One full correction-in-the-loop episode, narrated.

A deliberately bad policy drives into a wall; the session rolls the
simulator back to the checkpoint bit-exactly, the scripted operator
parks the car, and the failure/fix pair lands in the replay notebook.

Run: python3 demos/demo_correction_loop.py
"""

from parkbench.env import ParkingEnv, TerminationStatus
from parkbench.harness import ScriptedIntervenor, builtin_scenario
from parkbench.replay import MistakeNotebook
from parkbench.scheduler import CorrectionSession, SessionConfig
from parkbench.vehicle import Action


def wall_magnet_policy(obs):
    """Full speed ahead, whatever happens."""
    return Action(0.0, 1.5)


def main():
    scenario = builtin_scenario("open-lot")
    scene = scenario.build_scene()
    env = ParkingEnv(scene, scenario.vehicle, seed=7)
    notebook = MistakeNotebook()
    session = CorrectionSession(env, notebook, SessionConfig(max_retries=1), seed=7)
    intervenor = ScriptedIntervenor(scene, scenario.vehicle, env.config)

    print("=== Driving an episode with a policy that loves walls ===\n")
    events = []
    session.on_step = lambda s, t, lr: events.append((s.phase.value, t.mode.value, t.status))
    report = session.drive_episode(wall_magnet_policy, intervenor)

    autonomous = [e for e in events if e[0] == "autonomous"]
    correcting = [e for e in events if e[0] == "correcting"]
    print(f"autonomous steps: {len(autonomous)} "
          f"(ended with {autonomous[-1][2].value if autonomous[-1][2] else '?'})")
    print(f"correction steps: {len(correcting)} "
          f"(ended with {correcting[-1][2].value if correcting[-1][2] else '?'})")
    print(f"episode status:   {report.status.value}")
    print(f"retries:          {report.retries}")

    print("\n=== What the mistake notebook remembers ===\n")
    stats = notebook.stats()
    print(f"normal rl buffer:  {stats['rl_size']} transitions")
    print(f"normal human:      {stats['human_size']} transitions")
    print(f"correction regions: {stats['region_count']}")
    for region in notebook.regions:
        print(f"  region {region.episode_id}: {len(region.fail_rl)} failed rl steps "
              f"+ {len(region.fix_human)} human fix steps "
              f"+ {len(region.fix_rl)} policy fix steps")

    assert report.status is TerminationStatus.ARRIVED, "the operator should have parked"
    assert notebook.regions, "an accepted correction must produce a region"
    print("\nthe failed rollout and its fix now live side by side — "
          "pair sampling will keep showing the learner both")


if __name__ == "__main__":
    main()
