mod common;

use common::*;
use hicrl::backend::{FixtureBuilder, RecordingBackend, RoleHint};
use hicrl::engine::{run_episode, EpisodeInputs, Mode, RunConfig};
use hicrl::envs::{make_env, EnvId};
use hicrl::memory::LongTermMemory;
use hicrl::promptkit::fixtures::few_shot_examples;
use hicrl::promptkit::{finish_question, render_steps, render_trajectory, PromptStyle};
use hicrl::types::{GoalStatus, Outcome, Tag, Termination};

fn run(
    mode: Mode,
    responses: &[String],
    id: &str,
    tweak: impl FnOnce(&mut RunConfig),
) -> (hicrl::types::Episode, RecordingBackend<hicrl::backend::ScriptedBackend>) {
    let s = scenario(EnvId::MiniHouse, id);
    let backend = RecordingBackend::new(
        FixtureBuilder::new()
            .session(id, 1)
            .extend(responses.iter().cloned())
            .backend(),
    );
    let mut config = RunConfig::for_env(EnvId::MiniHouse, mode);
    tweak(&mut config);
    let examples = few_shot_examples(s.env, &s.task_type);
    let memory = LongTermMemory::default();
    let inputs = EpisodeInputs {
        scenario: &s,
        episode_index: 1,
        memory: &memory,
        examples: &examples,
        config: &config,
    };
    let mut env = make_env(s.env);
    let episode = run_episode(inputs, env.as_mut(), &backend).unwrap();
    (episode, backend)
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn three_subgoal_golden_episode() {
    let (ep, backend) = run(Mode::Hmr, &strings(&cool_golden()), "house-cool-1", |_| {});
    assert_eq!(ep.outcome, Outcome::Success);
    assert_eq!(ep.termination, Termination::EnvDone);
    assert_eq!(ep.reward, 1.0);
    let statuses: Vec<GoalStatus> = ep.trajectory.goals.iter().map(|g| g.status).collect();
    assert_eq!(
        statuses,
        [
            GoalStatus::Finished,
            GoalStatus::Finished,
            GoalStatus::OpenAtTermination
        ]
    );
    let expected = "\
[Goal] find a mug and take it
[Think] A mug is usually on a countertop. I will check countertop 1.
[Action] go to countertop 1
Observation: You arrive at countertop 1. On the countertop 1, you see a mug 1, and a bread 1.
[Finish] No
[Action] take mug 1 from countertop 1
Observation: You pick up the mug 1 from the countertop 1.
[Finish] Yes
[Goal] cool the mug with fridge
[Think] I hold the mug. The fridge will cool it.
[Action] go to fridge 1
Observation: You arrive at fridge 1. The fridge 1 is closed.
[Finish] No
[Action] cool mug 1 with fridge 1
Observation: You cool the mug 1 using the fridge 1.
[Finish] Yes
[Goal] put the mug in cabinet
[Think] Cabinet 3 is closed, so I open it first.
[Action] go to cabinet 3
Observation: You arrive at cabinet 3. The cabinet 3 is closed.
[Finish] No
[Action] open cabinet 3
Observation: You open the cabinet 3. The cabinet 3 is open. In it, you see a plate 2.
[Finish] No
[Action] put mug 1 in/on cabinet 3
Observation: You put the mug 1 in/on the cabinet 3.";
    assert_eq!(render_trajectory(&ep.trajectory.steps, PromptStyle::Tagged), expected);
    // Every response was used; no finisher call after the last action.
    assert_eq!(backend.exchanges().len(), cool_golden().len());
    assert_eq!(backend.exchanges().last().unwrap().request.role_hint, RoleHint::Action);
}

#[test]
fn finish_prompts_end_with_the_active_segment_only() {
    let (ep, backend) = run(Mode::Hmr, &strings(&cool_golden()), "house-cool-1", |_| {});
    let steps = &ep.trajectory.steps;
    // Walk requests and steps together.
    let mut finish_requests = backend
        .exchanges()
        .into_iter()
        .filter(|e| e.request.role_hint == RoleHint::Finish);
    for (i, step) in steps.iter().enumerate() {
        if step.tag != Tag::Finish {
            continue;
        }
        let prompt = finish_requests.next().unwrap().request.prompt;
        let start = steps[..i].iter().rposition(|s| s.is_finish_yes()).map_or(0, |j| j + 1);
        let goal = &steps[start].content;
        let mut tail = render_steps(&steps[start..i], PromptStyle::Tagged);
        tail.push(finish_question(goal));
        tail.push("[Finish]".into());
        let tail = tail.join("\n");
        // The task line directly precedes the active segment: nothing older is shown.
        assert!(prompt.ends_with(&format!(
            "Your task is to: cool some mug and put it in cabinet.\n{tail}"
        )));
    }
    assert!(finish_requests.next().is_none());
}

#[test]
fn finisher_retries_once_then_defaults_to_no() {
    let mut r = strings(&cool_golden()[..3]);
    r.extend(strings(&["maybe", "hmm", "take mug 1 from countertop 1", "Yes"]));
    let (ep, _) = run(Mode::Hmr, &r, "house-cool-1", |c| c.max_env_steps = 2);
    let finish = &ep.trajectory.steps[3];
    assert_eq!(finish.content, "No");
    assert_eq!(finish.raw.as_deref(), Some("hmm"));
    assert_eq!(ep.termination, Termination::StepCap);
    assert_eq!(ep.outcome, Outcome::Truncated);
}

#[test]
fn repeated_unparseable_goals_abort() {
    let (ep, _) = run(Mode::Hmr, &strings(&["", "[Goal]", "  "]), "house-cool-1", |_| {});
    assert_eq!(ep.termination, Termination::ParseAbort { cue: Tag::Goal });
    assert_eq!(ep.outcome, Outcome::Failure);
    assert!(ep.trajectory.is_empty());
}

#[test]
fn goal_cap_stops_new_goals() {
    let r = strings(&["a", "t", "look", "Yes", "b", "t", "look", "Yes"]);
    let (ep, _) = run(Mode::Hmr, &r, "house-cool-1", |c| c.max_goals = 2);
    assert_eq!(ep.termination, Termination::GoalCap);
    assert_eq!(ep.trajectory.goals.len(), 2);
}

#[test]
fn fixture_exhaustion_truncates() {
    let (ep, _) = run(Mode::Hmr, &strings(&["a", "t"]), "house-cool-1", |_| {});
    assert!(matches!(ep.termination, Termination::Backend { .. }));
    assert_eq!(ep.outcome, Outcome::Truncated);
}

#[test]
fn tag_free_mode_checks_step_type() {
    let r = strings(&[
        "goal: find a mug",
        "think: countertop",
        "think: still thinking",
        "action: go to countertop 1",
        "finish: no",
        "action: take mug 1 from countertop 1",
        "finish: yes",
    ]);
    let (ep, backend) = run(Mode::Notag, &r, "house-cool-1", |c| c.max_env_steps = 2);
    assert_eq!(ep.trajectory.len(), 5);
    assert_eq!(ep.trajectory.steps[2].content, "go to countertop 1");
    assert_eq!(ep.termination, Termination::StepCap);
    let first = &backend.exchanges()[0].request.prompt;
    assert!(first.ends_with("Next step:"));
    assert!(!first.contains("[Goal]"));
}

#[test]
fn tiny_budget_is_a_budget_termination() {
    let (ep, backend) = run(Mode::Hmr, &strings(&cool_golden()), "house-cool-1", |c| {
        c.char_budget = 50
    });
    assert!(matches!(ep.termination, Termination::Budget { .. }));
    assert!(backend.exchanges().is_empty());
}
