import { createApp } from "./server";

const port = Number(process.env.SHIM_PORT ?? process.argv[2] ?? 8800);
const app = createApp();
app.listen(port, () => {
  console.log(`shim server listening on http://127.0.0.1:${port}`);
  console.log("endpoints: /info /ground /init /predict /embed_image /embed_text");
});
