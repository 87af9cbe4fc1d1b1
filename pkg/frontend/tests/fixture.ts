// Spawns the real python gateway for browser-level tests.

import { type ChildProcess, spawn } from "node:child_process";
import { mkdtempSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

export interface GatewayFixture {
  base: string;
  stop: () => void;
}

export async function startGateway(): Promise<GatewayFixture> {
  const dir = mkdtempSync(join(tmpdir(), "console-gw-"));
  const configPath = join(dir, "config.json");
  writeFileSync(configPath, JSON.stringify({ fsync: false, data_dir: join(dir, "data") }));
  const proc: ChildProcess = spawn(
    "python3",
    ["-m", "parkvision.cli", "serve", "--port", "0", "--config", configPath],
    { stdio: ["ignore", "pipe", "pipe"] },
  );

  const base = await new Promise<string>((resolve, reject) => {
    let out = "";
    let err = "";
    const timer = setTimeout(
      () => reject(new Error(`gateway did not start: ${out} ${err}`)),
      15000,
    );
    proc.stdout?.on("data", (chunk: Buffer) => {
      out += chunk.toString();
      const match = out.match(/listening on (http:\/\/[\d.]+:\d+)/);
      if (match) {
        clearTimeout(timer);
        resolve(match[1]!);
      }
    });
    proc.stderr?.on("data", (chunk: Buffer) => {
      err += chunk.toString();
    });
    proc.on("exit", (code) => {
      clearTimeout(timer);
      reject(new Error(`gateway exited with ${code}: ${err}`));
    });
  });

  return {
    base,
    stop: () => {
      proc.kill("SIGINT");
    },
  };
}

let counter = 0;

/** Unique-ish grammar-valid plate + user per call, to isolate tests that
 * share one gateway. */
export function freshIdentity(): { plate: string; user: string } {
  counter += 1;
  const letters = "ABCDEFGHJKMNPRTUVWXY"; // avoid lookalike-heavy letters
  const a = letters[counter % letters.length]!;
  const b = letters[Math.floor(counter / letters.length) % letters.length]!;
  const digits = String(1000 + ((counter * 37) % 9000));
  return { plate: `${a}${b}77EE${digits}`, user: `user-${counter}` };
}
