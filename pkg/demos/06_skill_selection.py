"""Language-driven skill selection with the offline mock client.

Runs the five bundled tasks 25 times each against the rule-based mock and
prints the selection-frequency table, then contrasts it with the uniform
random baseline.

Run: python3 demos/06_skill_selection.py
"""

from graspkit.fixtures import default_skills, default_tasks
from graspkit.skills import (
    MockChatClient,
    RandomChatClient,
    build_prompt,
    run_task_suite,
    select_skill,
)

library = default_skills()
tasks = default_tasks()

print("skills:")
for s in library:
    print(f"  {s.id}. {s.description}")

print("\none full prompt, for the curious:\n" + "-" * 60)
print(build_prompt(tasks[4].scene, tasks[4].instruction, library))
print("-" * 60)

result = select_skill(MockChatClient(), tasks[4].scene, tasks[4].instruction, library)
print(f"\nT5 (lying bottle, 'grasp the bottom'): skill {result.skill_id}")
print(f"rationale: {result.rationale}")

report = run_task_suite(MockChatClient(), tasks, library, n_trials=25)
print("\nmock client, 25 trials per task:")
print(report.format_table())

baseline = run_task_suite(RandomChatClient(seed=0), tasks, library, n_trials=25)
print("\nrandom-selection baseline, 25 trials per task:")
print(baseline.format_table())
