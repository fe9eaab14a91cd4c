"""An agent working next to a user's canvas, over the public API only.

The user's canvas has data in the main runtime; the agent claims an empty
region to the right, forks the runtime, runs its steps there and reports
back — leaving everything the user made untouched.

    python demos/agent_session.py
"""

import tempfile

import httpx

from codecanvas.server import create_app, make_test_server


def main() -> None:
    app = create_app(tempfile.mkdtemp(prefix="codecanvas-agent-"))
    server, base_url = make_test_server(app)
    client = httpx.Client(base_url=base_url, timeout=120)

    cid = client.post("/canvases", json={"title": "shared"}).json()["id"]
    seed = client.post(
        f"/canvases/{cid}/cells",
        json={"source": "data = [3, 1, 4, 1, 5, 9, 2, 6]", "frame": {"x": 0, "y": 0, "width": 480, "height": 80}},
    ).json()
    client.post(f"/canvases/{cid}/cells/{seed['id']}/execute")
    print("user executed: data = [3, 1, 4, 1, 5, 9, 2, 6]\n")

    report = client.post(
        f"/canvases/{cid}/agent/tasks",
        json={
            "name": "describe data",
            "steps": [
                "count = len(data)\ncount",
                "total = sum(data)\ntotal",
                "sorted(data)[count // 2]  # median-ish",
            ],
        },
    ).json()

    print(f"agent status: {report['status']} in environment {report['env_id']}")
    for step in report["steps"]:
        texts = [i["data"] for i in step["result"]["bundle"] if i["mime"] == "text/plain"]
        print(f"  step {step['index'] + 1}: {step['result']['status']:<5} -> {texts}")

    snapshot = client.get(f"/canvases/{cid}").json()
    region = snapshot["environments"][report["env_id"]]["region"]
    print(f"\nagent region sits at x={region['x']} (clear of the user's content)")
    print(f"all cells on canvas (user + agent): {sorted(snapshot['cells'])}")

    client.close()
    server.should_exit = True
    app.state.service.close()


if __name__ == "__main__":
    main()
