import { spawn } from "node:child_process"
import { createInterface } from "node:readline"

/**
 * Run a command and yield its stdout line by line as the consumer asks for
 * them, blocking until a line becomes available or the process exits.
 *
 * The child's stderr passes through to ours (it is diagnostics, not data).
 * Spawn failures reject immediately; a nonzero exit status surfaces as an
 * error after the last line has been consumed.
 */
export async function* executeCommand(
  command: string,
  args: string[] = []
): AsyncGenerator<string, void, void> {
  const child = spawn(command, args, { stdio: ["ignore", "pipe", "inherit"] })

  const spawned = new Promise<void>((resolve, reject) => {
    child.once("spawn", resolve)
    child.once("error", reject)
  })
  const finished = new Promise<number>((resolve) => {
    child.once("close", (code) => resolve(code ?? -1))
  })
  await spawned

  const rl = createInterface({ input: child.stdout!, crlfDelay: Infinity })
  try {
    for await (const line of rl) {
      yield line
    }
  } finally {
    rl.close()
    if (child.exitCode === null && !child.killed) {
      child.kill("SIGKILL")
    }
  }
  const code = await finished
  if (code !== 0) {
    throw new Error(`${command} exited with status ${code}`)
  }
}
