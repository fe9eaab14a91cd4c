"""Guided tour of the HTTP API against an in-process server.

Run from the repository root after installing the package:

    python demos/api_tour.py
"""

import tempfile

import httpx

from codecanvas.server import create_app, make_test_server


def main() -> None:
    workspace = tempfile.mkdtemp(prefix="codecanvas-demo-")
    app = create_app(workspace)
    server, base_url = make_test_server(app)
    client = httpx.Client(base_url=base_url, timeout=60)
    print(f"service listening at {base_url}, workspace {workspace}\n")

    canvas = client.post("/canvases", json={"title": "tour"}).json()
    cid = canvas["id"]
    print(f"created canvas {cid}")

    cell = client.post(
        f"/canvases/{cid}/cells",
        json={"source": "total = 40 + 2\ntotal", "frame": {"x": 0, "y": 0, "width": 480, "height": 80}},
    ).json()
    result = client.post(f"/canvases/{cid}/cells/{cell['id']}/execute").json()
    print(f"executed {cell['id']} -> {result['bundle']}")

    env = client.post(
        f"/canvases/{cid}/environments",
        json={"region": {"x": 700, "y": 0, "width": 500, "height": 300}, "color": "#BF80FF"},
    ).json()
    print(f"forked environment {env['environment']['id']} (warnings: {env['warnings']})")

    probe = client.post(
        f"/canvases/{cid}/cells",
        json={"source": "total * 10  # runs in the fork", "frame": {"x": 750, "y": 40, "width": 400, "height": 80}},
    ).json()
    result = client.post(f"/canvases/{cid}/cells/{probe['id']}/execute").json()
    print(f"cell inside the region sees the forked state -> {result['bundle']}")

    outputs = client.get(f"/canvases/{cid}").json()["outputs"]
    first_output = next(iter(outputs))
    client.post(f"/canvases/{cid}/outputs/{first_output}/detach")
    print(f"detached output {first_output}; re-running its cell makes a fresh one")
    client.post(f"/canvases/{cid}/cells/{cell['id']}/execute")
    print(f"outputs now: {sorted(client.get(f'/canvases/{cid}').json()['outputs'])}")

    exported = client.get(f"/canvases/{cid}/export/ipynb").json()
    print(f"exported notebook with {len(exported['document']['cells'])} cells "
          f"(warnings: {exported['warnings']})")
    print("\nfirst 400 bytes of the .2dntb file:")
    print(client.get(f"/canvases/{cid}/file").text[:400])

    client.close()
    server.should_exit = True
    app.state.service.close()


if __name__ == "__main__":
    main()
